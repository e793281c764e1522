#include "samihs/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace samihs {

AdapterConfig AdapterConfig::with_default_bottleneck(std::size_t channel_dim,
                                                     std::size_t num_layers) {
  AdapterConfig c;
  c.channel_dim = channel_dim;
  c.bottleneck_dim = std::max<std::size_t>(1, channel_dim / 4);
  c.num_layers = num_layers;
  return c;
}

void AdapterConfig::validate() const {
  if (channel_dim == 0) throw ContractViolation("AdapterConfig: channel_dim must be positive");
  if (bottleneck_dim < 1 || bottleneck_dim > channel_dim) {
    throw ContractViolation("AdapterConfig: bottleneck_dim must be in [1, channel_dim]");
  }
  if (num_layers < 1) throw ContractViolation("AdapterConfig: num_layers must be >= 1");
}

const char* position_name(AdapterPosition pos) {
  return pos == AdapterPosition::mha ? "mha" : "mlp";
}

namespace {

void check_adapter_shapes(std::size_t width, const SharedProjection& proj,
                          const LayerFactors& f) {
  const Matrix& wd = proj.w_down.value();
  const Matrix& wu = proj.w_up.value();
  if (wd.rows() != width) {
    throw ContractViolation("pr_adapter_forward: input width " + std::to_string(width) +
                            " does not match W_down rows " + std::to_string(wd.rows()));
  }
  if (wu.rows() != wd.cols() || wu.cols() != width) {
    throw ContractViolation("pr_adapter_forward: W_up shape inconsistent with W_down");
  }
  if (f.scale.rows() != 1 || f.scale.cols() != wd.cols()) {
    throw ContractViolation("pr_adapter_forward: R_l length must equal bottleneck width");
  }
  if (f.shift.rows() != 1 || f.shift.cols() != width) {
    throw ContractViolation("pr_adapter_forward: B_l length must equal token width");
  }
}

}  // namespace

ag::Var pr_adapter_forward(const ag::Var& m_in, const SharedProjection& proj,
                           const LayerFactors& factors) {
  check_adapter_shapes(m_in.cols(), proj, factors);
  const ag::Var bottleneck = ag::mul_row(ag::matmul(m_in, proj.w_down), factors.scale);
  const ag::Var delta = ag::add_row(ag::matmul(bottleneck, proj.w_up), factors.shift);
  return ag::add(delta, m_in);
}

Matrix pr_adapter_forward(const Matrix& m_in, const SharedProjection& proj,
                          const LayerFactors& factors) {
  return pr_adapter_forward(ag::constant(m_in), proj, factors).value();
}

PRAdapterBank PRAdapterBank::init(const AdapterConfig& config, std::uint64_t seed) {
  config.validate();
  PRAdapterBank bank;
  bank.config_ = config;
  Rng rng(seed);
  const std::size_t c = config.channel_dim, cp = config.bottleneck_dim;
  auto make_projection = [&] {
    SharedProjection p;
    p.w_down = ag::parameter(random_normal(c, cp, 1.0 / std::sqrt(static_cast<double>(c)), rng));
    p.w_up = ag::parameter(random_normal(cp, c, 1.0 / std::sqrt(static_cast<double>(cp)), rng));
    return p;
  };
  auto make_factors = [&] {
    std::vector<LayerFactors> fs;
    for (std::size_t l = 0; l < config.num_layers; ++l) {
      fs.push_back({ag::parameter(Matrix(1, cp)), ag::parameter(Matrix(1, c))});
    }
    return fs;
  };
  // Both projections are always drawn so enabling one position never changes
  // the other's initial weights.
  SharedProjection mha = make_projection();
  SharedProjection mlp = make_projection();
  if (config.enable_mha_adapter) {
    bank.mha_ = mha;
    bank.mha_factors_ = make_factors();
  }
  if (config.enable_mlp_adapter) {
    bank.mlp_ = mlp;
    bank.mlp_factors_ = make_factors();
  }
  return bank;
}

bool PRAdapterBank::enabled(AdapterPosition pos) const {
  return pos == AdapterPosition::mha ? mha_.has_value() : mlp_.has_value();
}

const SharedProjection& PRAdapterBank::projection(AdapterPosition pos) const {
  const auto& p = pos == AdapterPosition::mha ? mha_ : mlp_;
  if (!p) throw ContractViolation(std::string("adapter position disabled: ") + position_name(pos));
  return *p;
}

const LayerFactors& PRAdapterBank::factors(AdapterPosition pos, std::size_t layer) const {
  const auto& fs = pos == AdapterPosition::mha ? mha_factors_ : mlp_factors_;
  if (!enabled(pos)) {
    throw ContractViolation(std::string("adapter position disabled: ") + position_name(pos));
  }
  if (layer >= fs.size()) throw ContractViolation("adapter layer index out of range");
  return fs[layer];
}

ag::Var PRAdapterBank::apply(AdapterPosition pos, std::size_t layer,
                             const ag::Var& tokens) const {
  if (!enabled(pos)) return tokens;
  return pr_adapter_forward(tokens, projection(pos), factors(pos, layer));
}

void PRAdapterBank::collect(ParamList& out) const {
  for (auto pos : {AdapterPosition::mha, AdapterPosition::mlp}) {
    if (!enabled(pos)) continue;
    const std::string prefix = std::string("adapter.") + position_name(pos);
    const auto& p = projection(pos);
    out.push_back({prefix + ".W_down", p.w_down});
    out.push_back({prefix + ".W_up", p.w_up});
    const auto& fs = pos == AdapterPosition::mha ? mha_factors_ : mlp_factors_;
    for (std::size_t l = 0; l < fs.size(); ++l) {
      out.push_back({prefix + ".layer" + std::to_string(l) + ".R", fs[l].scale});
      out.push_back({prefix + ".layer" + std::to_string(l) + ".B", fs[l].shift});
    }
  }
}

PRAdapterBank PRAdapterBank::clone() const {
  auto copy_var = [](const ag::Var& v) { return ag::parameter(v.value(), v.requires_grad()); };
  PRAdapterBank b;
  b.config_ = config_;
  if (mha_) b.mha_ = SharedProjection{copy_var(mha_->w_down), copy_var(mha_->w_up)};
  if (mlp_) b.mlp_ = SharedProjection{copy_var(mlp_->w_down), copy_var(mlp_->w_up)};
  for (const auto& f : mha_factors_) b.mha_factors_.push_back({copy_var(f.scale), copy_var(f.shift)});
  for (const auto& f : mlp_factors_) b.mlp_factors_.push_back({copy_var(f.scale), copy_var(f.shift)});
  return b;
}

std::size_t count_trainable_params(const AdapterConfig& config) {
  const std::size_t a = config.enabled_positions();
  const std::size_t c = config.channel_dim, cp = config.bottleneck_dim;
  return a * (c * cp + cp * c) + a * config.num_layers * (cp + c);
}

std::size_t count_trainable_params(const PRAdapterBank& bank) {
  return count_trainable_params(bank.config());
}

}  // namespace samihs
