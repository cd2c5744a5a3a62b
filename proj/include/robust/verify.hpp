#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace robust {

struct VerificationRow {
  std::string check;
  std::string instance;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool pass = false;
};

struct VerificationReport {
  std::vector<VerificationRow> rows;
  std::size_t passed() const;
  std::size_t failed() const;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  int young_samples = 10000;
  int bound_samples = 1000;
  int random_instances = 100;
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"young",       "identities",  "bounds",     "bellman",
                                              "optimality",  "equivalence", "convergence"};
  return names;
}

// Runs one suite, or every suite for "all". Throws ErrorCode::invalid_argument
// on an unknown name.
VerificationReport verify_suite(std::string_view suite, const VerifyOptions& options);

// Header check,instance,lhs,rhs,slack,pass.
void write_verification_csv(std::ostream& out, const VerificationReport& report);

}  // namespace robust
