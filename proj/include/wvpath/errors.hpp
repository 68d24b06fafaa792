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

#include <complex>
#include <stdexcept>
#include <string>

namespace wvpath {

/// Base class of every error raised by the physics layer.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// A precondition on the arguments does not hold.
class InvalidArgument : public Error {
   public:
    using Error::Error;
};

/// A wavefunction reached the edge band of its grid.
class SupportEscaped : public Error {
   public:
    using Error::Error;
};

/// Pre/postselection overlap too small to form a ratio.
class DenominatorUnderflow : public Error {
   public:
    DenominatorUnderflow(const std::string &what, std::complex<double> numerator, std::complex<double> denominator)
        : Error(what), numerator(numerator), denominator(denominator) {
    }
    std::complex<double> numerator;
    std::complex<double> denominator;
};

/// Postselection accepted (almost) nothing; carries the success probability or acceptance.
class PostselectionFailed : public Error {
   public:
    PostselectionFailed(const std::string &what, double acceptance) : Error(what), acceptance(acceptance) {
    }
    double acceptance;
};

/// Classical endpoint problem evaluated at (or too close to) a conjugate point.
class CausticError : public Error {
   public:
    CausticError(const std::string &what, double conjugate_time) : Error(what), conjugate_time(conjugate_time) {
    }
    double conjugate_time;
};

/// A trajectory integrator rejected a step (non-finite or runaway force).
class IntegrationFailed : public Error {
   public:
    using Error::Error;
};

/// Requested enumeration exceeds the configured work budget.
class BudgetExceeded : public Error {
   public:
    using Error::Error;
};

}  // namespace wvpath
