#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "onlstm/cell/cell.hpp"
#include "onlstm/numerics/gradcheck.hpp"

namespace onlstm::app {

// Process exit codes. Stable; listed in the README.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,           // bad flags, bad config values
  kMissingFile = 2,     // an input path does not exist
  kNonFinite = 3,       // training produced a NaN or infinite loss
  kCellMismatch = 4,    // checkpoint cell kind differs from --cell or the command's needs
  kLengthMismatch = 5,  // prediction and gold files disagree in lines or tokens
  kCheckFailed = 6,     // grad-check found a block above tolerance
  kBadInput = 7,        // malformed data, checkpoint or vocabulary file
};

// Runs one command line (args[0] is the program name). Results go to `out`;
// `err` is written only on failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Gradient check of a language model's loss on one random sentence.
struct GradCheckOptions {
  CellKind cell = CellKind::kOnLstm;
  std::size_t vocab_size = 12;
  std::size_t embed_size = 8;
  std::vector<std::size_t> hidden_sizes{16, 16};
  std::size_t chunk_factor = 4;
  std::size_t steps = 5;  // <bos> plus steps-1 tokens, steps predictions
  std::uint64_t seed = 1;
  // Every parameter is drawn from U(-s, s). At the training initialization the
  // recurrent state is close to zero and the recurrent gate blocks get
  // gradients near finite-difference round-off; at this scale no block does.
  double param_scale = 1.0;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
};

GradCheckReport lm_gradient_check(const GradCheckOptions& options);

}  // namespace onlstm::app
