#include "tscore/training.hpp"

#include <cmath>
#include <string>

#include "tscore/errors.hpp"
#include "tscore/mmd.hpp"

namespace tscore {

namespace {

Vector unit_or_axis(std::span<const double> g) {
  Vector z(g.begin(), g.end());
  const double n = std::sqrt(squared_norm(z));
  if (n > 0.0) {
    for (double& v : z) v /= n;
  } else {
    z.assign(z.size(), 0.0);
    z[0] = 1.0;
  }
  return z;
}

Matrix project_rows_to_sphere(const Matrix& g) {
  Matrix out(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const Vector z = unit_or_axis(g.row(i));
    std::copy(z.begin(), z.end(), out.row(i).begin());
  }
  return out;
}

// Pulls a gradient w.r.t. z = g / |g| back to g.
Matrix sphere_projection_backward(const Matrix& g, const Matrix& z, const Matrix& upstream) {
  Matrix out(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const double n = std::sqrt(squared_norm(g.row(i)));
    if (!(n > 0.0)) continue;
    const double radial = dot(upstream.row(i), z.row(i));
    for (std::size_t t = 0; t < g.cols(); ++t) out(i, t) = (upstream(i, t) - radial * z(i, t)) / n;
  }
  return out;
}

double mean_squared_residual(const Matrix& x, const Matrix& recon) {
  double s = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double d = x.values()[t] - recon.values()[t];
    s += d * d;
  }
  return s / static_cast<double>(x.rows());
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

void TrainConfig::validate(std::size_t data_dim) const {
  if (hidden_width == 0) throw InvalidInput("config: hidden width must be positive");
  if (latent_dim == 0) throw InvalidInput("config: latent dimension must be positive");
  if (latent_dim > data_dim)
    throw InvalidInput("config: latent dimension " + std::to_string(latent_dim) +
                       " exceeds data dimension " + std::to_string(data_dim));
  if (mixture_components == 0) throw InvalidInput("config: need at least one prior component");
  if (prior_kind == PriorKind::vmf_mixture && latent_dim < 2)
    throw InvalidInput("config: vMF prior requires latent dimension >= 2");
  if (!(beta > 0.0)) throw InvalidInput("config: beta must be positive");
  if (!(kernel_width > 0.0)) throw InvalidInput("config: kernel width must be positive");
  if (!(prior_variance > 0.0)) throw InvalidInput("config: prior variance must be positive");
  if (!(prior_concentration >= 0.0)) throw InvalidInput("config: concentration must be >= 0");
  if (batch_size < 2) throw InvalidInput("config: batch size must be at least 2");
  if (!(adam.learning_rate > 0.0)) throw InvalidInput("config: learning rate must be positive");
}

Vector TrainedModel::encode(std::span<const double> x) const {
  Vector g = encoder.predict(x);
  return prior.on_sphere() ? unit_or_axis(g) : g;
}

Matrix TrainedModel::encode(const Matrix& x) const {
  Matrix g = encoder.predict(x);
  return prior.on_sphere() ? project_rows_to_sphere(g) : g;
}

Matrix TrainedModel::reconstruct(const Matrix& x) const { return decoder.predict(encode(x)); }

double residual_variance(const TrainedModel& model, const Matrix& x) {
  const Matrix recon = model.reconstruct(x);
  const std::size_t n = x.size();
  if (n < 2) throw InvalidInput("residual variance: need at least two residual components");
  double mean = 0.0;
  for (std::size_t t = 0; t < n; ++t) mean += x.values()[t] - recon.values()[t];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double d = x.values()[t] - recon.values()[t] - mean;
    ss += d * d;
  }
  return ss / static_cast<double>(n - 1);
}

double wae_loss(const MlpNetwork& encoder, const MlpNetwork& decoder, const Prior& prior,
                const Matrix& batch, const Matrix& prior_samples, double beta, double c) {
  if (batch.rows() < 2) throw InvalidInput("wae loss: batch needs at least two rows");
  Matrix z = encoder.predict(batch);
  if (prior.on_sphere()) z = project_rows_to_sphere(z);
  const Matrix recon = decoder.predict(z);
  double loss = mean_squared_residual(batch, recon);
  if (beta != 0.0) loss += beta * mmd2_unbiased(z, prior_samples, c);
  return loss;
}

double wae_loss(const MlpNetwork& encoder, const MlpNetwork& decoder, const Prior& prior,
                const Matrix& batch, double beta, double c, Rng& rng) {
  if (batch.rows() < 2) throw InvalidInput("wae loss: batch needs at least two rows");
  const Matrix samples = prior.sample(batch.rows(), rng);
  return wae_loss(encoder, decoder, prior, batch, samples, beta, c);
}

WaeGradient wae_loss_gradient(const MlpNetwork& encoder, const MlpNetwork& decoder,
                              const Prior& prior, const Matrix& batch, const PriorDraw& draw,
                              double beta, double c) {
  if (batch.rows() < 2) throw InvalidInput("wae loss: batch needs at least two rows");
  const double n = static_cast<double>(batch.rows());

  auto enc = encoder.forward(batch);
  const bool sphere = prior.on_sphere();
  const Matrix z = sphere ? project_rows_to_sphere(enc.output) : enc.output;
  auto dec = decoder.forward(z);

  WaeGradient out;
  Matrix d_recon(batch.rows(), batch.cols());
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const double r = dec.output.values()[t] - batch.values()[t];
    out.reconstruction += r * r;
    d_recon.values()[t] = 2.0 * r / n;
  }
  out.reconstruction /= n;

  auto dec_back = decoder.backward(dec.tape, d_recon);
  out.decoder = std::move(dec_back.parameter_gradient);
  Matrix d_z = std::move(dec_back.input_gradient);

  const Matrix samples = prior.realize(draw);
  auto mmd = mmd2_unbiased_with_gradient(z, samples, c);
  out.mmd = mmd.value;
  for (std::size_t t = 0; t < d_z.size(); ++t) d_z.values()[t] += beta * mmd.wrt_x.values()[t];
  for (double& v : mmd.wrt_z.values()) v *= beta;
  out.prior = prior.realize_backward(draw, mmd.wrt_z);

  const Matrix d_g = sphere ? sphere_projection_backward(enc.output, z, d_z) : d_z;
  out.encoder = encoder.backward(enc.tape, d_g).parameter_gradient;
  out.loss = out.reconstruction + beta * out.mmd;
  return out;
}

TrainedModel initialize_model(const TrainConfig& config, std::size_t data_dim) {
  config.validate(data_dim);
  Rng rng(derive_seed(config.seed, {1}));
  std::vector<std::size_t> enc_widths{data_dim}, dec_widths{config.latent_dim};
  for (std::size_t i = 0; i < config.hidden_layers; ++i) {
    enc_widths.push_back(config.hidden_width);
    dec_widths.push_back(config.hidden_width);
  }
  enc_widths.push_back(config.latent_dim);
  dec_widths.push_back(data_dim);

  TrainedModel m;
  m.config = config;
  m.encoder = MlpNetwork::glorot(enc_widths, Activation::swish, Activation::linear, rng);
  m.decoder = MlpNetwork::glorot(dec_widths, Activation::swish, Activation::linear, rng);
  m.prior = Prior::initial(config.prior_kind, config.latent_dim, config.mixture_components,
                           config.prior_scale(), rng);
  m.input_scaling = Normalizer::identity(data_dim);
  return m;
}

TrainedModel train(const TrainConfig& config, const Matrix& data, std::vector<double>* loss_trace) {
  if (!data.all_finite()) throw InvalidInput("train: non-finite training data");
  TrainedModel model = initialize_model(config, data.cols());
  if (data.rows() < config.batch_size)
    throw InvalidInput("train: " + std::to_string(data.rows()) + " rows is fewer than the batch size " +
                       std::to_string(config.batch_size));

  const std::size_t n_enc = model.encoder.parameter_count();
  const std::size_t n_dec = model.decoder.parameter_count();
  const std::size_t n_prior = model.prior.trainable_count();
  Vector params(n_enc + n_dec + n_prior);
  Vector grads(params.size());
  AdamState adam(params.size(), config.adam);

  Rng rng(derive_seed(config.seed, {2}));
  std::uniform_int_distribution<std::size_t> pick(0, data.rows() - 1);
  std::vector<std::size_t> rows(config.batch_size);
  if (loss_trace) loss_trace->reserve(loss_trace->size() + config.steps);

  for (std::size_t step = 0; step < config.steps; ++step) {
    for (auto& r : rows) r = pick(rng);
    const Matrix batch = select_rows(data, rows);
    const PriorDraw draw = model.prior.draw(config.batch_size, rng);
    const WaeGradient g = wae_loss_gradient(model.encoder, model.decoder, model.prior, batch, draw,
                                            config.beta, config.kernel_width);
    if (!std::isfinite(g.loss) || !all_finite(g.encoder) || !all_finite(g.decoder) ||
        !all_finite(g.prior))
      throw TrainingDiverged(step, "non-finite WAE loss");
    if (loss_trace) loss_trace->push_back(g.loss);

    const Vector enc = model.encoder.parameters();
    const Vector dec = model.decoder.parameters();
    const Vector pri = model.prior.trainable_parameters();
    std::copy(enc.begin(), enc.end(), params.begin());
    std::copy(dec.begin(), dec.end(), params.begin() + static_cast<std::ptrdiff_t>(n_enc));
    std::copy(pri.begin(), pri.end(), params.begin() + static_cast<std::ptrdiff_t>(n_enc + n_dec));
    std::copy(g.encoder.begin(), g.encoder.end(), grads.begin());
    std::copy(g.decoder.begin(), g.decoder.end(), grads.begin() + static_cast<std::ptrdiff_t>(n_enc));
    std::copy(g.prior.begin(), g.prior.end(), grads.begin() + static_cast<std::ptrdiff_t>(n_enc + n_dec));

    adam.step(params, grads);
    if (!all_finite(params)) throw TrainingDiverged(step, "non-finite parameters");

    const std::span<const double> p(params);
    model.encoder.set_parameters(p.subspan(0, n_enc));
    model.decoder.set_parameters(p.subspan(n_enc, n_dec));
    model.prior.set_trainable_parameters(p.subspan(n_enc + n_dec, n_prior));
  }

  Rng eval_rng(derive_seed(config.seed, {3}));
  model.final_loss = data.rows() >= 2 ? wae_loss(model.encoder, model.decoder, model.prior, data,
                                                 config.beta, config.kernel_width, eval_rng)
                                      : 0.0;
  if (!std::isfinite(model.final_loss)) throw TrainingDiverged(config.steps, "non-finite final loss");
  model.residual_variance = std::max(residual_variance(model, data), 1e-12);
  return model;
}

}  // namespace tscore
