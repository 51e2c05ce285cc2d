#include "drag/error.hpp"
#include "drag/model.hpp"

#include <json.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace drag::model {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'R', 'A', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::string real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw ValidationError("checkpoint truncated while reading " + what);
  return value;
}

json hp_to_json(const HyperParams& hp) {
  return json{{"layers", hp.layers},
              {"hidden", hp.hidden},
              {"heads_alpha", hp.heads_alpha},
              {"heads_beta", hp.heads_beta},
              {"heads_gamma", hp.heads_gamma},
              {"activation", activation_name(hp.activation)},
              {"score_slope", hp.score_slope},
              {"literal_blocks", hp.literal_blocks}};
}

HyperParams hp_from_json(const json& j) {
  HyperParams hp;
  hp.layers = j.at("layers").get<Index>();
  hp.hidden = j.at("hidden").get<Index>();
  hp.heads_alpha = j.at("heads_alpha").get<Index>();
  hp.heads_beta = j.at("heads_beta").get<Index>();
  hp.heads_gamma = j.at("heads_gamma").get<Index>();
  hp.activation = parse_activation(j.at("activation").get<std::string>());
  hp.score_slope = j.at("score_slope").get<double>();
  hp.literal_blocks = j.at("literal_blocks").get<bool>();
  return hp;
}

}  // namespace

AttentionKind parse_attention_kind(const std::string& name) {
  if (name == "alpha") return AttentionKind::Alpha;
  if (name == "beta") return AttentionKind::Beta;
  if (name == "gamma") return AttentionKind::Gamma;
  throw ValidationError("unknown attention kind `" + name + "` (expected alpha, beta or gamma)");
}

std::string export_attention(const ForwardState& state, AttentionKind which) {
  if (!state.cached) throw ValidationError("attention coefficients were not cached during the forward pass");
  std::ostringstream out;
  switch (which) {
    case AttentionKind::Alpha:
      out << "node_id,layer,relation_or_layer_index,neighbor_id,head,coefficient\n";
      for (std::size_t l = 0; l < state.alpha.size(); ++l) {
        for (std::size_t k = 0; k < state.alpha[l].size(); ++k) {
          const EdgeAttention& att = state.alpha[l][k];
          for (Index e = 0; e < att.coefficients.rows(); ++e) {
            for (Index t = 0; t < att.coefficients.cols(); ++t) {
              out << (*att.target)[e] << ',' << l << ',' << k << ',' << (*att.source)[e] << ',' << t << ','
                  << real(att.coefficients(e, t)) << '\n';
            }
          }
        }
      }
      break;
    case AttentionKind::Beta:
      out << "node_id,layer,relation_or_layer_index,head,coefficient\n";
      for (std::size_t l = 0; l < state.beta.size(); ++l) {
        for (std::size_t t = 0; t < state.beta[l].size(); ++t) {
          const Matrix& b = state.beta[l][t];
          for (Index i = 0; i < b.rows(); ++i) {
            for (Index k = 0; k < b.cols(); ++k) {
              out << i << ',' << l << ',' << k << ',' << t << ',' << real(b(i, k)) << '\n';
            }
          }
        }
      }
      break;
    case AttentionKind::Gamma: {
      if (state.gamma.empty()) throw ValidationError("layer aggregation was disabled; no gamma coefficients exist");
      out << "node_id,layer,relation_or_layer_index,head,coefficient\n";
      for (std::size_t t = 0; t < state.gamma.size(); ++t) {
        const Matrix& g = state.gamma[t];
        for (Index i = 0; i < g.rows(); ++i) {
          for (Index l = 0; l < g.cols(); ++l) {
            out << i << ',' << g.cols() << ',' << l << ',' << t << ',' << real(g(i, l)) << '\n';
          }
        }
      }
      break;
    }
  }
  return out.str();
}

void save_checkpoint(const std::filesystem::path& path, DragParams& params, const std::string& metadata_json) {
  json header;
  header["hyperparams"] = hp_to_json(params.hp);
  header["num_relations"] = params.num_relations;
  header["feature_dim"] = params.feature_dim;
  try {
    header["metadata"] = json::parse(metadata_json);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const std::string header_text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  auto tensors = params.tensors();
  put<std::uint64_t>(out, tensors.size());
  for (const auto& ref : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ref.name.size()));
    out.write(ref.name.data(), static_cast<std::streamsize>(ref.name.size()));
    const Matrix& v = ref.tensor->value;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(v.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(v.cols()));
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError(path.string() + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get<std::uint64_t>(in, "header length");
  std::string header_text(header_len, '\0');
  if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len))) {
    throw ValidationError("checkpoint truncated in header");
  }

  Checkpoint ckpt;
  try {
    const json header = json::parse(header_text);
    ckpt.params = init_params(hp_from_json(header.at("hyperparams")), header.at("num_relations").get<Index>(),
                              header.at("feature_dim").get<Index>(), 0);
    ckpt.metadata_json = header.at("metadata").dump();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad checkpoint header: ") + e.what());
  }

  std::map<std::string, Tensor*> by_name;
  for (auto& ref : ckpt.params.tensors()) by_name[ref.name] = ref.tensor;
  const auto count = get<std::uint64_t>(in, "tensor count");
  if (count != by_name.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(by_name.size()));
  }
  for (std::uint64_t t = 0; t < count; ++t) {
    const auto name_len = get<std::uint32_t>(in, "tensor name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw ValidationError("checkpoint truncated in tensor name");
    auto it = by_name.find(name);
    if (it == by_name.end() || it->second == nullptr) throw ValidationError("unexpected tensor `" + name + "`");
    const auto rows = get<std::uint64_t>(in, name + " rows");
    const auto cols = get<std::uint64_t>(in, name + " cols");
    Matrix& v = it->second->value;
    if (rows != static_cast<std::uint64_t>(v.rows()) || cols != static_cast<std::uint64_t>(v.cols())) {
      throw ValidationError("tensor `" + name + "` has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                            ", expected " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()));
    }
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)))) {
      throw ValidationError("checkpoint truncated in tensor `" + name + "`");
    }
    it->second = nullptr;
  }
  return ckpt;
}

}  // namespace drag::model
