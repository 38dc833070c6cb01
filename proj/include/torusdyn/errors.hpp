#pragma once

#include <stdexcept>
#include <string>

namespace torusdyn {

// Base of every library error. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error { using Error::Error; };
class StiffnessError : public Error { using Error::Error; };
class AccuracyError : public Error { using Error::Error; };
class NoOrbitError : public Error {
public:
    NoOrbitError(const std::string& msg, double residual) : Error(msg), final_residual(residual) {}
    double final_residual;
};
class DegenerateGuessError : public Error { using Error::Error; };
class SingularFrameError : public Error { using Error::Error; };
class ChartError : public Error { using Error::Error; };
class NotHyperbolicError : public Error { using Error::Error; };
class BranchError : public Error { using Error::Error; };
class BlendError : public Error { using Error::Error; };
class SupportOverlapError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class BudgetError : public Error {
public:
    BudgetError(const std::string& msg, double best) : Error(msg), best_margin(best) {}
    double best_margin;
};

}  // namespace torusdyn
