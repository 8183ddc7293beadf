#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "run_config.hpp"

namespace recnn::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kIo = 4,
  kData = 5,
  kTraining = 6,
  kCheckFailed = 7,
};

struct ErrorInfo {
  int code = kInternal;
  std::string kind;
};

ErrorInfo classify(const std::exception& e);

/// One-line JSON object for stderr.
std::string error_json(int code, const std::string& kind, const std::string& message);

struct Context {
  RunConfig config;
  std::filesystem::path out_dir = "recnn-out";
  std::ostream* stdout_stream = nullptr;
};

int cmd_gen(const Context& ctx);
int cmd_train(const Context& ctx);
int cmd_eval(const Context& ctx);
int cmd_gradcheck(const Context& ctx);
int cmd_compare(const Context& ctx);
int cmd_validate_theory(const Context& ctx);

}  // namespace recnn::cli
