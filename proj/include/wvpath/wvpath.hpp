// Copyright 2026 The wvpath Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "wvpath/classical_limit.hpp"
#include "wvpath/core.hpp"
#include "wvpath/coupling.hpp"
#include "wvpath/errors.hpp"
#include "wvpath/experiment.hpp"
#include "wvpath/interferometer.hpp"
#include "wvpath/parallel.hpp"
#include "wvpath/potential.hpp"
#include "wvpath/propagators.hpp"
#include "wvpath/semiclassical.hpp"
#include "wvpath/weak_values.hpp"
