#include <gtest/gtest.h>

#include <random>
#include <set>

#include "gradcheck.hpp"
#include "samihs/losses.hpp"
#include "samihs/model.hpp"

using namespace samihs;
namespace ag = samihs::ag;

namespace {

std::set<std::string> names(const ParamList& ps) {
  std::set<std::string> s;
  for (const auto& p : ps) s.insert(p.name);
  return s;
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

std::size_t elements(const ParamList& ps) {
  std::size_t n = 0;
  for (const auto& p : ps) n += p.var.value().size();
  return n;
}

}  // namespace

TEST(BuildModel, FreezePolicyByComponent) {
  const Model m = Model::build(ModelConfig{}, 1);
  for (const auto& p : m.trainable()) {
    EXPECT_TRUE(starts_with(p.name, "adapter.") || starts_with(p.name, "prompt.") ||
                starts_with(p.name, "decoder."))
        << p.name;
    EXPECT_TRUE(p.var.requires_grad());
  }
  for (const auto& p : m.frozen()) {
    EXPECT_TRUE(starts_with(p.name, "encoder.")) << p.name;
    EXPECT_FALSE(p.var.requires_grad());
  }
  ParamList enc;
  m.encoder.collect(enc);
  EXPECT_EQ(names(enc), names(m.frozen()));
  for (const char* want : {"adapter.mha.W_down", "adapter.mlp.layer1.B", "prompt.fg_embed", "decoder.mask_token"})
    EXPECT_TRUE(names(m.trainable()).count(want)) << want;
  // the prompt positional basis is a fixed buffer in neither set
  EXPECT_EQ(names(m.buffers()), std::set<std::string>{"prompt.pe_gaussian"});
}

TEST(BuildModel, AdaptersOffLeavesPromptAndDecoder) {
  ModelConfig cfg;
  cfg.enable_mha_adapter = cfg.enable_mlp_adapter = false;
  const Model m = Model::build(cfg, 1);
  for (const auto& p : m.trainable())
    EXPECT_TRUE(starts_with(p.name, "prompt.") || starts_with(p.name, "decoder.")) << p.name;
  EXPECT_EQ(m.report().adapter, 0u);
}

TEST(BuildModel, ReportMatchesEnumeration) {
  std::mt19937_64 rng(81);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 8; ++t) {
    ModelConfig cfg;
    cfg.enable_mha_adapter = coin(rng);
    cfg.enable_mlp_adapter = coin(rng);
    cfg.encoder.num_layers = 1 + static_cast<std::size_t>(t % 3);
    const Model m = Model::build(cfg, static_cast<std::uint64_t>(t));
    const ParamReport r = m.report();
    ParamList enc, bank, prompt, dec;
    m.encoder.collect(enc);
    m.bank.collect(bank);
    m.prompt.collect(prompt);
    m.decoder.collect(dec);
    EXPECT_EQ(r.encoder, elements(enc));
    EXPECT_EQ(r.adapter, elements(bank));
    EXPECT_EQ(r.prompt, elements(prompt));
    EXPECT_EQ(r.decoder, elements(dec));
    EXPECT_EQ(r.adapter, oracle::adapter_param_enumeration(32, 8, cfg.encoder.num_layers,
                                                           cfg.enable_mha_adapter, cfg.enable_mlp_adapter));
    EXPECT_EQ(r.trainable, r.adapter + r.prompt + r.decoder);
    EXPECT_EQ(r.frozen, r.encoder);
    EXPECT_EQ(r.total(), r.encoder + r.adapter + r.prompt + r.decoder);
    EXPECT_EQ(r.trainable, elements(m.trainable()));
  }
}

TEST(BuildModel, InvalidConfigsThrowConfigError) {
  ModelConfig a;
  a.encoder.patch_size = 6;
  a.encoder.image_size = 36;
  EXPECT_THROW(Model::build(a, 0), ConfigError);
  ModelConfig b;
  b.encoder.num_heads = 3;
  EXPECT_THROW(Model::build(b, 0), ConfigError);
  ModelConfig c;
  c.bottleneck_dim = 64;
  EXPECT_THROW(Model::build(c, 0), ConfigError);
  ModelConfig d;
  d.encoder.image_size = 30;
  EXPECT_THROW(Model::build(d, 0), ConfigError);
}

TEST(BuildModel, ConfigJsonRoundTrip) {
  ModelConfig cfg;
  cfg.encoder.window_size = 2;
  cfg.encoder.global_layers = {1};
  cfg.enable_mlp_adapter = false;
  cfg.bottleneck_dim = 4;
  const nlohmann::json j = cfg;
  const ModelConfig back = j.get<ModelConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(Model, IdentityAtInitEqualsAdapterFreeEncoder) {
  const Model m = Model::build(ModelConfig{}, 2);
  std::mt19937_64 rng(82);
  const Matrix x = oracle::random_matrix(16, 16, rng, 0, 1);
  EXPECT_EQ(encode_image(x, m.encoder, &m.bank).tokens.value(),
            encode_image(x, m.encoder, nullptr).tokens.value());
}

TEST(Model, GradientsReachTrainableNotFrozen) {
  Model m = Model::build(ModelConfig{}, 3);
  std::mt19937_64 rng(83);
  // nonzero scales so the shared projections sit on the gradient path
  for (auto pos : {AdapterPosition::mha, AdapterPosition::mlp})
    for (std::size_t l = 0; l < 2; ++l) {
      auto f = m.bank.factors(pos, l);
      f.scale.mutable_value() = oracle::random_matrix(1, 8, rng);
    }
  const Matrix x = oracle::random_matrix(16, 16, rng, 0, 1);
  Mask g(16, 16);
  for (std::size_t r = 4; r < 9; ++r)
    for (std::size_t c = 5; c < 11; ++c) g(r, c) = 1;
  const auto loss = combo_loss(m.forward(x, {7, 6}).probs, g, {});
  ag::backward(loss);
  for (const auto& p : m.frozen()) EXPECT_TRUE(p.var.grad().empty()) << p.name;
  for (const auto& b : m.buffers()) EXPECT_TRUE(b.var.grad().empty()) << b.name;
  for (const auto& p : m.trainable()) {
    ASSERT_FALSE(p.var.grad().empty()) << p.name;
    double n = 0;
    for (double v : p.var.grad().span()) n += v * v;
    EXPECT_GT(n, 0.0) << p.name;
  }
}

TEST(Model, EndToEndGradientSpotCheck) {
  Model m = Model::build(ModelConfig{}, 4);
  std::mt19937_64 rng(84);
  for (auto pos : {AdapterPosition::mha, AdapterPosition::mlp})
    for (std::size_t l = 0; l < 2; ++l) {
      auto f = m.bank.factors(pos, l);
      f.scale.mutable_value() = oracle::random_matrix(1, 8, rng);
    }
  const Matrix x = oracle::random_matrix(16, 16, rng, 0, 1);
  Mask g(16, 16);
  for (std::size_t r = 3; r < 10; ++r)
    for (std::size_t c = 2; c < 8; ++c) g(r, c) = 1;
  std::vector<std::pair<std::string, ag::Var>> leaves;
  for (const auto& p : m.trainable()) leaves.emplace_back(p.name, p.var);
  const auto res = gradcheck::check([&] { return combo_loss(m.forward(x, {4, 5}).probs, g, {}); }, leaves, 1, 85);
  EXPECT_LE(res.max_rel_err, 1e-4) << res.worst;
}

TEST(Checkpoint, RoundTripReproducesOutputsBitwise) {
  const auto dir = oracle::scratch_dir("ckpt");
  Model m = Model::build(ModelConfig{}, 5);
  std::mt19937_64 rng(86);
  for (auto& p : m.trainable()) {
    auto v = p.var;
    for (auto& e : v.mutable_value().span()) e += 0.01 * std::uniform_real_distribution<double>(-1, 1)(rng);
  }
  export_checkpoint(m, {{"epoch", 0}}).save(dir / "m.ckpt");
  const Model back = model_from_checkpoint(read_checkpoint(dir / "m.ckpt"));
  EXPECT_EQ(nlohmann::json(back.config()), nlohmann::json(m.config()));
  const Matrix x = oracle::random_matrix(16, 16, rng, 0, 1);
  const auto a = full_forward(x, {3, 9}, m), b = full_forward(x, {3, 9}, back);
  EXPECT_EQ(a.full_res_probs, b.full_res_probs);
  EXPECT_EQ(a.low_res_logits, b.low_res_logits);
  EXPECT_EQ(hash_tensors(m.parameters()), hash_tensors(back.parameters()));
  // roles recorded per tensor
  const auto file = read_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(file.find("encoder.pos")->role, TensorRole::frozen);
  EXPECT_EQ(file.find("decoder.mask_token")->role, TensorRole::trainable);
  EXPECT_EQ(file.find("prompt.pe_gaussian")->role, TensorRole::buffer);
}

TEST(Checkpoint, IncompatibleFilesAreRejected) {
  const auto dir = oracle::scratch_dir("ckpt_bad");
  EXPECT_THROW(read_checkpoint(dir / "missing.ckpt"), CheckpointError);
  Model m = Model::build(ModelConfig{}, 6);
  NamedArrayFile f = export_checkpoint(m, {});
  f.put("decoder.logit_bias", Matrix(2, 2));
  Model target = Model::build(ModelConfig{}, 7);
  try {
    load_checkpoint_tensors(target, f);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.logit_bias"), std::string::npos);
  }
  NamedArrayFile no_model;
  EXPECT_THROW(model_from_checkpoint(no_model), CheckpointError);
}

TEST(Import, SelfExportRoundTrip) {
  Model src = Model::build(ModelConfig{}, 8);
  const NamedArrayFile file = export_checkpoint(src, {});
  nlohmann::json mapping = nlohmann::json::object();
  for (const auto& e : file.entries()) mapping[e.name] = e.name;
  Model dst = Model::build(ModelConfig{}, 9);
  EXPECT_NE(hash_tensors(dst.parameters()), hash_tensors(src.parameters()));
  const auto r = import_pretrained(dst, file, mapping);
  EXPECT_EQ(r.loaded.size(), file.entries().size());
  EXPECT_EQ(hash_tensors(dst.parameters()), hash_tensors(src.parameters()));
}

TEST(Import, WrongShapeNamesTheTensor) {
  Model dst = Model::build(ModelConfig{}, 10);
  NamedArrayFile src;
  src.put("vit.blocks.0.norm1.weight", Matrix(1, 7));
  src.put("extra", Matrix(1, 1));
  const nlohmann::json mapping = {{"vit.blocks.0.norm1.weight", "encoder.block0.ln1.weight"}};
  try {
    import_pretrained(dst, src, mapping);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("encoder.block0.ln1.weight"), std::string::npos) << msg;
    EXPECT_NE(msg.find("unmapped source tensor extra"), std::string::npos) << msg;
  }
}

TEST(Import, PartialImportLeavesOtherComponentsAtInit) {
  Model src = Model::build(ModelConfig{}, 11);
  const NamedArrayFile file = export_checkpoint(src, {});
  nlohmann::json mapping = nlohmann::json::object();
  for (const auto& e : file.entries())
    mapping[e.name] = starts_with(e.name, "encoder.") ? nlohmann::json(e.name) : nlohmann::json(nullptr);
  Model dst = Model::build(ModelConfig{}, 12);
  const Model fresh = Model::build(ModelConfig{}, 12);
  import_pretrained(dst, file, mapping);
  EXPECT_EQ(hash_tensors(dst.frozen()), hash_tensors(src.frozen()));
  EXPECT_EQ(hash_tensors(dst.trainable()), hash_tensors(fresh.trainable()));
}

TEST(Hash, SensitiveToValuesAndShapes) {
  const Model m = Model::build(ModelConfig{}, 13);
  const auto h = hash_tensors(m.parameters());
  auto p = m.parameters()[0].var;
  p.mutable_value()[0] += 1e-12;
  EXPECT_NE(hash_tensors(m.parameters()), h);
}
