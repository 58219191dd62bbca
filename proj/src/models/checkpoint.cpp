#include "onlstm/models/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <map>

#include "json.hpp"
#include "onlstm/errors.hpp"
#include "onlstm/io/files.hpp"

namespace onlstm {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'O', 'N', 'L', 'S', 'T', 'M', 'C', 'K'};

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void expect_magic() {
    need(sizeof(kMagic));
    if (std::memcmp(bytes_.data(), kMagic, sizeof(kMagic)) != 0) throw CheckpointError("not a checkpoint file");
    pos_ += sizeof(kMagic);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint is truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

json dropout_json(const DropoutRates& d) {
  return {{"input", d.input}, {"hidden", d.hidden}, {"output", d.output}, {"weight", d.weight}};
}

DropoutRates dropout_from(const json& j) {
  return {j.at("input").get<double>(), j.at("hidden").get<double>(), j.at("output").get<double>(),
          j.at("weight").get<double>()};
}

template <typename Fn>
auto parse_config(const std::string& text, Fn&& fn) {
  try {
    return fn(json::parse(text));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("invalid config in checkpoint: ") + e.what());
  }
}

void restore(const Checkpoint& ck, const std::vector<Parameter*>& params) {
  std::map<std::string, const Tensor*> stored;
  for (const auto& e : ck.tensors) {
    if (!stored.emplace(e.name, &e.value).second) throw CheckpointError("duplicate tensor '" + e.name + "'");
  }
  if (stored.size() != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(stored.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (Parameter* p : params) {
    const auto it = stored.find(p->name);
    if (it == stored.end()) throw CheckpointError("checkpoint lacks tensor '" + p->name + "'");
    if (it->second->shape() != p->value.shape()) {
      throw CheckpointError("tensor '" + p->name + "' has shape " + shape_string(it->second->shape()) +
                            ", config implies " + shape_string(p->value.shape()));
    }
    p->value = *it->second;
    p->zero_grad();
  }
}

Checkpoint collect(std::string kind, std::string config, const std::vector<const Parameter*>& params) {
  Checkpoint ck{std::move(kind), std::move(config), {}};
  for (const Parameter* p : params) ck.tensors.push_back({p->name, p->value});
  return ck;
}

Checkpoint load_kind(const std::filesystem::path& path, const std::string& kind) {
  Checkpoint ck = parse_checkpoint(io::read_file(path));
  if (ck.kind != kind) {
    throw CheckpointError(path.string() + " holds a '" + ck.kind + "' checkpoint, expected '" + kind + "'");
  }
  return ck;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put_string(out, ck.kind);
  put_string(out, ck.config_json);
  put<std::uint64_t>(out, ck.tensors.size());
  for (const auto& e : ck.tensors) {
    put_string(out, e.name);
    put<std::uint64_t>(out, e.value.shape().size());
    for (std::size_t d : e.value.shape()) put<std::uint64_t>(out, d);
    for (double v : e.value.values()) put<double>(out, v);
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  in.expect_magic();
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.kind = in.get_string();
  ck.config_json = in.get_string();
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    Checkpoint::Entry e;
    e.name = in.get_string();
    const auto rank = in.get<std::uint64_t>();
    if (rank == 0 || rank > 8) throw CheckpointError("tensor '" + e.name + "' has invalid rank");
    Shape shape;
    std::uint64_t total = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      shape.push_back(in.get<std::uint64_t>());
      if (shape.back() == 0 || shape.back() > (1ULL << 32)) {
        throw CheckpointError("tensor '" + e.name + "' has invalid shape");
      }
      total *= shape.back();
    }
    if (total > bytes.size()) throw CheckpointError("checkpoint is truncated");
    std::vector<double> values(total);
    for (double& v : values) v = in.get<double>();
    e.value = Tensor(std::move(shape), std::move(values));
    ck.tensors.push_back(std::move(e));
  }
  if (!in.done()) throw CheckpointError("trailing bytes after the last tensor");
  return ck;
}

std::string config_to_json(const LanguageModelConfig& c) {
  const json j = {{"vocab_size", c.vocab_size},     {"embed_size", c.embed_size},
                  {"hidden_sizes", c.hidden_sizes}, {"chunk_factor", c.chunk_factor},
                  {"cell", std::string(to_string(c.cell))}, {"tie_weights", c.tie_weights},
                  {"dropout", dropout_json(c.dropout)}};
  return j.dump();
}

LanguageModelConfig lm_config_from_json(const std::string& text) {
  return parse_config(text, [](const json& j) {
    LanguageModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.embed_size = j.at("embed_size").get<std::size_t>();
    c.hidden_sizes = j.at("hidden_sizes").get<std::vector<std::size_t>>();
    c.chunk_factor = j.at("chunk_factor").get<std::size_t>();
    c.cell = parse_cell_kind(j.at("cell").get<std::string>());
    c.tie_weights = j.at("tie_weights").get<bool>();
    c.dropout = dropout_from(j.at("dropout"));
    return c;
  });
}

std::string config_to_json(const ClassifierConfig& c) {
  const json j = {{"vocab_size", c.vocab_size},     {"embed_size", c.embed_size},
                  {"hidden_sizes", c.hidden_sizes}, {"chunk_factor", c.chunk_factor},
                  {"cell", std::string(to_string(c.cell))}, {"mlp_size", c.mlp_size},
                  {"dropout", dropout_json(c.dropout)}};
  return j.dump();
}

ClassifierConfig classifier_config_from_json(const std::string& text) {
  return parse_config(text, [](const json& j) {
    ClassifierConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.embed_size = j.at("embed_size").get<std::size_t>();
    c.hidden_sizes = j.at("hidden_sizes").get<std::vector<std::size_t>>();
    c.chunk_factor = j.at("chunk_factor").get<std::size_t>();
    c.cell = parse_cell_kind(j.at("cell").get<std::string>());
    c.mlp_size = j.at("mlp_size").get<std::size_t>();
    c.dropout = dropout_from(j.at("dropout"));
    return c;
  });
}

void save_model(const LanguageModel& model, const std::filesystem::path& path) {
  io::atomic_write(path, serialize_checkpoint(collect("lm", config_to_json(model.config()), model.parameters())));
}

void save_model(const InferenceClassifier& classifier, const std::filesystem::path& path) {
  io::atomic_write(path, serialize_checkpoint(collect("classifier", config_to_json(classifier.config()),
                                                      classifier.parameters())));
}

LanguageModel load_language_model(const std::filesystem::path& path) {
  const Checkpoint ck = load_kind(path, "lm");
  LanguageModel model(lm_config_from_json(ck.config_json));
  restore(ck, model.parameters());
  return model;
}

InferenceClassifier load_classifier(const std::filesystem::path& path) {
  const Checkpoint ck = load_kind(path, "classifier");
  InferenceClassifier classifier(classifier_config_from_json(ck.config_json));
  restore(ck, classifier.parameters());
  return classifier;
}

std::string checkpoint_kind(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_file(path)).kind;
}

}  // namespace onlstm
