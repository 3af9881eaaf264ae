#include "tfunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "tfunet/loss.hpp"
#include "tfunet/model.hpp"
#include "tfunet/nn.hpp"
#include "tfunet/ops.hpp"

namespace tfunet::gradcheck {

namespace {

using Rng = std::mt19937_64;

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// Random linear functional of the output, so every output element matters.
std::function<Tensor(const Tensor&)> projector(const Shape& shape, Rng& rng) {
  Tensor r = random_tensor(shape, rng, false);
  return [r](const Tensor& y) { return sum(mul(y, r)); };
}

std::vector<Tensor> params_of(const nn::NamedTensors& named) {
  std::vector<Tensor> out;
  for (const auto& n : named) out.push_back(n.tensor);
  return out;
}

}  // namespace

Result check(const std::string& component, const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
             const Options& opt) {
  for (auto t : inputs) t.zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    backward(f());
  }
  Result res;
  res.component = component;
  Rng rng(opt.seed ^ std::hash<std::string>{}(component));
  auto probe = [&](std::uint64_t& signature) {
    BranchMonitor mon;
    const double v = f().item();
    signature = mon.signature();
    return v;
  };
  std::uint64_t base_sig = 0;
  // Difference-quotient roundoff grows with |f|, so the floor does too.
  const double floor = opt.abs_floor * std::max(1.0, std::abs(probe(base_sig)));
  for (auto t : inputs) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    std::vector<std::size_t> idx(t.numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (idx.size() > opt.max_per_tensor) std::shuffle(idx.begin(), idx.end(), rng);
    auto data = t.data();
    std::size_t taken = 0;
    for (auto i : idx) {
      if (taken == opt.max_per_tensor) break;
      const double keep = data[i];
      // Richardson-extrapolated central differences: D(h) carries an h^2
      // truncation term, (4 D(h/2) - D(h)) / 3 cancels it.
      bool kink = false;
      auto central = [&](double h) {
        std::uint64_t sig_up = 0, sig_down = 0;
        data[i] = keep + h;
        const double up = probe(sig_up);
        data[i] = keep - h;
        const double down = probe(sig_down);
        data[i] = keep;
        kink = kink || sig_up != base_sig || sig_down != base_sig;
        return (up - down) / (2.0 * h);
      };
      const double coarse = central(opt.eps);
      const double fine = central(0.5 * opt.eps);
      // The stencil straddles a ReLU kink or a max-pool switch: the
      // difference quotient is not a derivative there.
      if (kink) {
        ++res.skipped;
        continue;
      }
      const double numeric = (4.0 * fine - coarse) / 3.0;
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      res.max_rel_err = std::max(res.max_rel_err, std::abs(analytic[i] - numeric) / denom);
      ++res.checked;
      ++taken;
    }
  }
  for (auto t : inputs) t.zero_grad();
  res.passed = std::isfinite(res.max_rel_err) && res.max_rel_err < opt.tolerance;
  return res;
}

std::vector<Result> run_all(const Options& opt) {
  Rng rng(opt.seed);
  std::vector<Result> out;

  {
    Tensor x = random_tensor({2, 3, 11}, rng, true);
    nn::Conv1d conv(3, 4, 3, 2, 1, rng);
    auto proj = projector({2, 4, 6}, rng);
    out.push_back(check("conv1d", [&] { return proj(conv.forward(x)); }, {x, conv.weight, conv.bias}, opt));
  }
  {
    Tensor x = random_tensor({2, 4, 5}, rng, true);
    nn::ConvTranspose1d up(4, 3, 2, 2, rng);
    auto proj = projector({2, 3, 10}, rng);
    out.push_back(check("conv_transpose1d", [&] { return proj(up.forward(x)); }, {x, up.weight, up.bias}, opt));
  }
  {
    // Distinct values 0.01 apart keep every window maximum clear of ties.
    Tensor x = Tensor::zeros({2, 3, 8}, true);
    std::vector<double> vals(x.numel());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i) - 0.2;
    std::shuffle(vals.begin(), vals.end(), rng);
    std::copy(vals.begin(), vals.end(), x.data().begin());
    auto proj = projector({2, 3, 4}, rng);
    out.push_back(check("maxpool1d", [&] { return proj(maxpool1d(x, 2)); }, {x}, opt));
  }
  {
    Tensor x = random_tensor({3, 4, 7}, rng, true);
    nn::BatchNorm1d bn(4);
    for (auto& v : bn.gamma.data()) v = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    for (auto& v : bn.beta.data()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    auto proj = projector({3, 4, 7}, rng);
    out.push_back(check("batch_norm", [&] { return proj(bn.forward(x, true)); }, {x, bn.gamma, bn.beta}, opt));
  }
  {
    Tensor x = random_tensor({2, 5, 8}, rng, true);
    nn::LayerNorm ln(8);
    for (auto& v : ln.gamma.data()) v = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    for (auto& v : ln.beta.data()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    auto proj = projector({2, 5, 8}, rng);
    out.push_back(check("layer_norm", [&] { return proj(ln.forward(x)); }, {x, ln.gamma, ln.beta}, opt));
  }
  {
    Tensor x = random_tensor({2, 3, 6}, rng, true, -2.0, 2.0);
    auto proj = projector({2, 3, 6}, rng);
    out.push_back(check("softmax", [&] { return proj(softmax_last(x)); }, {x}, opt));
  }
  {
    Tensor x = random_tensor({2, 5, 6}, rng, true);
    nn::Linear lin(6, 4, true, rng);
    auto proj = projector({2, 5, 4}, rng);
    out.push_back(check("linear", [&] { return proj(lin.forward(x)); }, {x, lin.weight, lin.bias}, opt));
  }
  {
    Tensor x = random_tensor({2, 5, 8}, rng, true);
    nn::MultiHeadSelfAttention attn(8, 2, rng);
    auto proj = projector({2, 5, 8}, rng);
    nn::NamedTensors named;
    attn.collect("attn", named);
    auto inputs = params_of(named);
    inputs.insert(inputs.begin(), x);
    out.push_back(check("mhsa", [&] { return proj(attn.forward(x)); }, inputs, opt));
  }
  {
    Tensor x = random_tensor({2, 5, 8}, rng, true);
    nn::FeedForward ffn(8, 32, rng);
    auto proj = projector({2, 5, 8}, rng);
    nn::NamedTensors named;
    ffn.collect("ffn", named);
    auto inputs = params_of(named);
    inputs.insert(inputs.begin(), x);
    out.push_back(check("ffn", [&] { return proj(ffn.forward(x)); }, inputs, opt));
  }
  {
    Tensor x = random_tensor({2, 5, 8}, rng, true);
    nn::TransformerEncoderLayer layer(8, 2, 32, rng);
    auto proj = projector({2, 5, 8}, rng);
    nn::NamedTensors named;
    layer.collect("layer", named);
    auto inputs = params_of(named);
    inputs.insert(inputs.begin(), x);
    out.push_back(check("transformer_layer", [&] { return proj(layer.forward(x)); }, inputs, opt));
  }
  {
    Tensor x = random_tensor({2, 2, 12}, rng, true);
    nn::DoubleConv block(2, 3, rng);
    auto proj = projector({2, 3, 12}, rng);
    nn::NamedTensors named;
    block.collect("block", named);
    auto inputs = params_of(named);
    inputs.insert(inputs.begin(), x);
    out.push_back(check("double_conv", [&] { return proj(block.forward(x, true)); }, inputs, opt));
  }
  {
    // Errors on both sides of beta.
    Tensor y = random_tensor({2, 1, 16}, rng, false, -2.0, 2.0);
    Tensor y_hat = random_tensor({2, 1, 16}, rng, true, -2.0, 2.0);
    out.push_back(check("smooth_l1", [&] { return smooth_l1(y_hat, y, 0.5); }, {y_hat}, opt));
  }
  {
    Tensor y = random_tensor({2, 1, 30}, rng, false);
    Tensor y_hat = random_tensor({2, 1, 30}, rng, true);
    out.push_back(check("spectral_loss", [&] { return spectral_loss(y_hat, y); }, {y_hat}, opt));
  }
  {
    ModelConfig cfg;
    cfg.base_channels = 2;
    cfg.transformer_layers = 1;
    cfg.heads = 4;
    cfg.input_len = 64;
    cfg.seed = opt.seed + 1;
    TFTransUNet1D model(cfg);
    Tensor x = random_tensor({2, 1, 64}, rng, true);
    Tensor y = random_tensor({2, 1, 64}, rng, false);
    auto inputs = params_of(model.parameters());
    inputs.insert(inputs.begin(), x);
    LossConfig loss;
    Options o = opt;
    o.max_per_tensor = std::min<std::size_t>(opt.max_per_tensor, 6);
    out.push_back(check("model", [&] { return total_loss(model.forward(x, true), y, loss).first; }, inputs, o));
  }
  return out;
}

std::string format_report(const std::vector<Result>& results) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %8s %8s %14s  %s\n", "component", "checked", "skipped", "max_rel_err",
                "status");
  os << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-20s %8zu %8zu %14.3e  %s\n", r.component.c_str(), r.checked, r.skipped,
                  r.max_rel_err, r.passed ? "PASS" : "FAIL");
    os << line;
  }
  return os.str();
}

}  // namespace tfunet::gradcheck
