#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "onlstm/models/classifier.hpp"
#include "onlstm/models/language_model.hpp"

namespace onlstm {

// Binary layout, little-endian:
//   magic "ONLSTMCK", u32 format version,
//   u64 length + bytes of the kind tag ("lm" or "classifier"),
//   u64 length + bytes of the JSON config echo,
//   u64 tensor count, then per tensor:
//     u64 length + name bytes, u64 rank, u64 dims..., f64 values...
struct Checkpoint {
  struct Entry {
    std::string name;
    Tensor value;
  };
  std::string kind;
  std::string config_json;
  std::vector<Entry> tensors;
};

inline constexpr unsigned kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& bytes);

std::string config_to_json(const LanguageModelConfig& config);
LanguageModelConfig lm_config_from_json(const std::string& text);
std::string config_to_json(const ClassifierConfig& config);
ClassifierConfig classifier_config_from_json(const std::string& text);

// Writes are atomic. Loading rebuilds the model from the stored config and
// rejects any missing, extra or misshaped tensor with CheckpointError.
void save_model(const LanguageModel& model, const std::filesystem::path& path);
void save_model(const InferenceClassifier& classifier, const std::filesystem::path& path);
LanguageModel load_language_model(const std::filesystem::path& path);
InferenceClassifier load_classifier(const std::filesystem::path& path);

// Kind tag stored in a checkpoint file ("lm" or "classifier").
std::string checkpoint_kind(const std::filesystem::path& path);

}  // namespace onlstm
