#pragma once

#include <stdexcept>
#include <string>

namespace xsum {

// Every failure carries a short machine-parsable category so the CLI can
// print `error: <category>: <message>` and pick an exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

#define XSUM_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(tag, message) {} \
  };

XSUM_DEFINE_ERROR(DimensionError, "dimension")
XSUM_DEFINE_ERROR(ConfigError, "config")
XSUM_DEFINE_ERROR(StateError, "state")
XSUM_DEFINE_ERROR(EvaluationError, "evaluation")
XSUM_DEFINE_ERROR(IngestionError, "ingestion")
XSUM_DEFINE_ERROR(VocabularyError, "vocabulary")
XSUM_DEFINE_ERROR(OracleScaleError, "oracle-scale")
XSUM_DEFINE_ERROR(DivergenceError, "divergence")
XSUM_DEFINE_ERROR(PathError, "path")
XSUM_DEFINE_ERROR(VersionError, "version")

#undef XSUM_DEFINE_ERROR

}  // namespace xsum
