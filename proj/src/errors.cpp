#include "mfcmc/errors.hpp"

namespace mfcmc {

ConfigError::ConfigError(const std::string& field_path, const std::string& message)
    : Error(field_path + ": " + message), field_path_(field_path) {}

}  // namespace mfcmc
