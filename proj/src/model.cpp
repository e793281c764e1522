#include "samihs/model.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <set>

namespace samihs {

void ModelConfig::validate() const {
  try {
    encoder.validate();
    adapter().validate();
    decoder().validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  if (encoder.patch_size % 4 != 0) {
    throw ConfigError("patch_size must be a multiple of 4 (decoder upscales by patch_size/4)");
  }
  if (encoder.channel_dim % 2 != 0) throw ConfigError("channel_dim must be even");
  if (encoder.input_size() < 2) throw ConfigError("image_size must be at least 4");
}

AdapterConfig ModelConfig::adapter() const {
  AdapterConfig a = AdapterConfig::with_default_bottleneck(encoder.channel_dim, encoder.num_layers);
  if (bottleneck_dim) a.bottleneck_dim = bottleneck_dim;
  a.enable_mha_adapter = enable_mha_adapter;
  a.enable_mlp_adapter = enable_mlp_adapter;
  return a;
}

DecoderConfig ModelConfig::decoder() const {
  DecoderConfig d;
  const std::size_t c = encoder.channel_dim;
  d.channel_dim = c;
  d.num_layers = decoder_layers;
  d.num_heads = decoder_heads;
  d.mlp_dim = decoder_mlp_dim ? decoder_mlp_dim : 2 * c;
  d.upscale_channels = upscale_channels ? upscale_channels : std::max<std::size_t>(1, c / 2);
  d.upscale_factor = encoder.patch_size / 4;
  return d;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"image_size", c.encoder.image_size},
       {"patch_size", c.encoder.patch_size},
       {"channel_dim", c.encoder.channel_dim},
       {"num_layers", c.encoder.num_layers},
       {"num_heads", c.encoder.num_heads},
       {"mlp_ratio", c.encoder.mlp_ratio},
       {"window_size", c.encoder.window_size},
       {"global_layers", c.encoder.global_layers},
       {"bottleneck_dim", c.bottleneck_dim},
       {"enable_mha_adapter", c.enable_mha_adapter},
       {"enable_mlp_adapter", c.enable_mlp_adapter},
       {"decoder_layers", c.decoder_layers},
       {"decoder_heads", c.decoder_heads},
       {"decoder_mlp_dim", c.decoder_mlp_dim},
       {"upscale_channels", c.upscale_channels}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.encoder.image_size = j.value("image_size", d.encoder.image_size);
  c.encoder.patch_size = j.value("patch_size", d.encoder.patch_size);
  c.encoder.channel_dim = j.value("channel_dim", d.encoder.channel_dim);
  c.encoder.num_layers = j.value("num_layers", d.encoder.num_layers);
  c.encoder.num_heads = j.value("num_heads", d.encoder.num_heads);
  c.encoder.mlp_ratio = j.value("mlp_ratio", d.encoder.mlp_ratio);
  c.encoder.window_size = j.value("window_size", d.encoder.window_size);
  c.encoder.global_layers = j.value("global_layers", d.encoder.global_layers);
  c.bottleneck_dim = j.value("bottleneck_dim", d.bottleneck_dim);
  c.enable_mha_adapter = j.value("enable_mha_adapter", d.enable_mha_adapter);
  c.enable_mlp_adapter = j.value("enable_mlp_adapter", d.enable_mlp_adapter);
  c.decoder_layers = j.value("decoder_layers", d.decoder_layers);
  c.decoder_heads = j.value("decoder_heads", d.decoder_heads);
  c.decoder_mlp_dim = j.value("decoder_mlp_dim", d.decoder_mlp_dim);
  c.upscale_channels = j.value("upscale_channels", d.upscale_channels);
}

nlohmann::json ParamReport::to_json() const {
  return {{"encoder", encoder}, {"adapter", adapter},     {"prompt", prompt},
          {"decoder", decoder}, {"trainable", trainable}, {"frozen", frozen},
          {"total", total()}};
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::size_t element_count(const ParamList& ps) {
  std::size_t n = 0;
  for (const auto& p : ps) n += p.var.value().size();
  return n;
}

}  // namespace

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  m.encoder = ImageEncoder::init(config.encoder, derive_seed(seed, 0));
  m.bank = PRAdapterBank::init(config.adapter(), derive_seed(seed, 1));
  m.prompt = PromptEncoder::init(config.encoder.channel_dim, derive_seed(seed, 2));
  m.decoder = MaskDecoder::init(config.decoder(), derive_seed(seed, 3));

  ParamList enc;
  m.encoder.collect(enc);
  for (auto& p : enc) p.var.set_requires_grad(false);
  ParamList rest;
  m.bank.collect(rest);
  m.prompt.collect(rest);
  m.decoder.collect(rest);
  for (auto& p : rest) p.var.set_requires_grad(true);
  return m;
}

ParamList Model::parameters() const {
  ParamList out;
  encoder.collect(out);
  bank.collect(out);
  prompt.collect(out);
  decoder.collect(out);
  return out;
}

ParamList Model::buffers() const {
  ParamList out;
  prompt.collect_buffers(out);
  return out;
}

ParamList Model::trainable() const {
  ParamList out;
  for (auto& p : parameters())
    if (p.var.requires_grad()) out.push_back(p);
  return out;
}

ParamList Model::frozen() const {
  ParamList out;
  for (auto& p : parameters())
    if (!p.var.requires_grad()) out.push_back(p);
  return out;
}

ParamReport Model::report() const {
  ParamReport r;
  ParamList e, a, p, d;
  encoder.collect(e);
  bank.collect(a);
  prompt.collect(p);
  decoder.collect(d);
  r.encoder = element_count(e);
  r.adapter = element_count(a);
  r.prompt = element_count(p);
  r.decoder = element_count(d);
  r.trainable = element_count(trainable());
  r.frozen = element_count(frozen());
  return r;
}

Model::Output Model::forward(const Matrix& image, const PointPrompt& point) const {
  const std::size_t h = image.rows(), w = image.cols();
  const ImageEmbedding emb = encode_image(image, encoder, &bank);
  const ag::Var prompt_token = encode_point_prompt(point, h, w, prompt);
  Output out;
  out.low_res_logits = decode_mask(emb, prompt_token, decoder, prompt);
  out.probs = ag::sigmoid(ag::resize_bilinear(out.low_res_logits, h, w));
  return out;
}

MaskPrediction full_forward(const Matrix& image, const PointPrompt& point, const Model& model) {
  const auto out = model.forward(image, point);
  return {out.low_res_logits.value(), out.probs.value()};
}

NamedArrayFile export_checkpoint(const Model& model, nlohmann::json manifest) {
  NamedArrayFile f;
  manifest["model"] = model.config();
  f.metadata = std::move(manifest);
  for (const auto& p : model.parameters()) {
    f.put(p.name, p.var.value(), p.var.requires_grad() ? TensorRole::trainable : TensorRole::frozen);
  }
  for (const auto& b : model.buffers()) f.put(b.name, b.var.value(), TensorRole::buffer);
  return f;
}

void load_checkpoint_tensors(Model& model, const NamedArrayFile& file) {
  ParamList all = model.parameters();
  for (auto& b : model.buffers()) all.push_back(b);
  std::vector<std::string> problems;
  std::set<std::string> known;
  for (auto& p : all) {
    known.insert(p.name);
    const ArrayEntry* e = file.find(p.name);
    if (!e) {
      problems.push_back("missing " + p.name);
      continue;
    }
    if (e->dtype != DType::f64 || e->rows != p.var.rows() || e->cols != p.var.cols()) {
      problems.push_back("shape mismatch " + p.name + " " + shape_str(e->rows, e->cols) +
                         " vs " + shape_str(p.var.rows(), p.var.cols()));
    }
  }
  for (const auto& e : file.entries())
    if (!known.count(e.name)) problems.push_back("unexpected " + e.name);
  if (!problems.empty()) {
    std::string msg = "checkpoint incompatible with model:";
    for (const auto& s : problems) msg += "\n  " + s;
    throw CheckpointError(msg);
  }
  for (auto& p : all) p.var.mutable_value() = file.matrix(p.name);
}

Model model_from_checkpoint(const NamedArrayFile& file) {
  if (!file.metadata.contains("model")) throw CheckpointError("checkpoint has no model config");
  ModelConfig cfg;
  try {
    cfg = file.metadata.at("model").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad model config in checkpoint: ") + e.what());
  }
  Model m = [&] {
    try {
      return Model::build(cfg, 0);
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("bad model config in checkpoint: ") + e.what());
    }
  }();
  load_checkpoint_tensors(m, file);
  return m;
}

NamedArrayFile read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  try {
    return NamedArrayFile::load(path);
  } catch (const ContainerError& e) {
    throw CheckpointError("cannot read checkpoint " + path.string() + ": " + e.what());
  }
}

ImportResult import_pretrained(Model& model, const NamedArrayFile& source,
                               const nlohmann::json& mapping) {
  if (!mapping.is_object()) throw CheckpointError("import mapping must be a JSON object");
  std::map<std::string, ag::Var> targets;
  for (auto& p : model.parameters()) targets.emplace(p.name, p.var);
  for (auto& b : model.buffers()) targets.emplace(b.name, b.var);

  std::vector<std::string> problems;
  std::vector<std::pair<std::string, const ArrayEntry*>> plan;
  std::set<std::string> used;
  for (const auto& e : source.entries()) {
    if (mapping.contains(e.name) && mapping[e.name].is_null()) continue;  // explicit skip
    if (!mapping.contains(e.name) || !mapping[e.name].is_string()) {
      problems.push_back("unmapped source tensor " + e.name);
      continue;
    }
    const std::string target = mapping[e.name].get<std::string>();
    const auto it = targets.find(target);
    if (it == targets.end()) {
      problems.push_back("source " + e.name + " maps to unknown tensor " + target);
      continue;
    }
    if (!used.insert(target).second) {
      problems.push_back("tensor " + target + " mapped more than once");
      continue;
    }
    if (e.dtype != DType::f64 || e.rows != it->second.rows() || e.cols != it->second.cols()) {
      problems.push_back("shape mismatch for " + target + ": source " + e.name + " is " +
                         shape_str(e.rows, e.cols) + ", model expects " +
                         shape_str(it->second.rows(), it->second.cols()));
      continue;
    }
    plan.emplace_back(target, &e);
  }
  if (!problems.empty()) {
    std::string msg = "import failed:";
    for (const auto& s : problems) msg += "\n  " + s;
    throw CheckpointError(msg);
  }
  ImportResult r;
  for (const auto& [target, entry] : plan) {
    targets.at(target).mutable_value() = Matrix(entry->rows, entry->cols, entry->f64);
    r.loaded.push_back(target);
  }
  return r;
}

std::uint64_t hash_tensors(const ParamList& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : params) {
    const Matrix& m = p.var.value();
    const std::uint64_t shape[2] = {m.rows(), m.cols()};
    feed(shape, sizeof shape);
    feed(m.data(), m.size() * sizeof(double));
  }
  return h;
}

}  // namespace samihs
