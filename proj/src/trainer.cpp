#include "voxgan/trainer.hpp"

#include "voxgan/container.hpp"

#include <cmath>
#include <sstream>

namespace voxgan {

TrainingSet TrainingSet::unconditional(std::span<const VoxelGrid> grids) {
  TrainingSet t;
  for (const auto& g : grids) t.targets.push_back(to_signed_tensor(g));
  return t;
}

TrainingSet TrainingSet::shells(std::span<const CompletionPair> pairs) {
  TrainingSet t;
  for (const auto& p : pairs) {
    t.targets.push_back(to_signed_tensor(p.target));
    t.conditions.push_back(to_signed_tensor(p.condition));
  }
  return t;
}

TrainingSet TrainingSet::images(std::span<const CompletionPair> pairs) {
  TrainingSet t;
  for (const auto& p : pairs) {
    t.targets.push_back(to_signed_tensor(p.target));
    const Image img = render_silhouette(p.target, p.view);
    t.conditions.push_back(stack_images(std::span(&img, 1)).reshaped({1, img.height, img.width}));
  }
  return t;
}

Tensor stack_samples(const std::vector<Tensor>& samples, std::span<const std::int64_t> indices) {
  if (indices.empty()) throw ShapeError("stack_samples: empty batch");
  const auto& first = samples.at(static_cast<std::size_t>(indices[0]));
  Shape shape{static_cast<std::int64_t>(indices.size())};
  shape.insert(shape.end(), first.shape().begin(), first.shape().end());
  Tensor out(shape);
  const auto n = first.size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& s = samples.at(static_cast<std::size_t>(indices[i]));
    if (s.shape() != first.shape()) throw ShapeError("stack_samples: mixed sample shapes");
    out.vec().segment(static_cast<Eigen::Index>(i) * n, n) = s.vec();
  }
  return out;
}

std::string telemetry_csv(std::span<const TelemetryRow> rows) {
  std::ostringstream os;
  os.precision(17);
  os << kTelemetryHeader << '\n';
  for (const auto& r : rows) {
    os << r.step << ',' << r.epoch << ',' << r.d_loss << ',';
    if (r.g_loss) os << *r.g_loss;
    os << ',' << r.gp_term << ',' << r.grad_norm_mean << ',';
    if (r.e_loss) os << *r.e_loss;
    os << '\n';
  }
  return os.str();
}

std::vector<double> TrainState::epoch_disc_loss() const {
  std::vector<double> sum, count;
  for (const auto& r : history) {
    const auto e = static_cast<std::size_t>(r.epoch);
    if (sum.size() <= e) sum.resize(e + 1, 0.0), count.resize(e + 1, 0.0);
    sum[e] += r.d_loss;
    count[e] += 1;
  }
  for (std::size_t e = 0; e < sum.size(); ++e) sum[e] = count[e] > 0 ? sum[e] / count[e] : 0.0;
  return sum;
}

TrainState init_state(const RunConfig& config) {
  config.validate();
  TrainState s;
  s.config = config;
  s.rng = Rng(config.train.seed);
  ModelSpec spec = config.model;
  spec.base = NetworkBase::Generator;
  s.generator = build_generator(spec, s.rng);
  spec.base = NetworkBase::Discriminator;
  s.discriminator = build_discriminator(spec, s.rng);
  if (config.train.mode == TrainMode::VanillaGan) s.discriminator = with_sigmoid_readout(std::move(s.discriminator));
  if (config.train.mode == TrainMode::VaeIWGan) {
    spec.base = config.encoder;
    s.encoder = build_encoder(spec, s.rng);
  }
  const auto& t = config.train;
  s.opt_generator = Adam(t.adam(t.lr_generator));
  s.opt_discriminator = Adam(t.adam(t.lr_discriminator));
  s.opt_encoder = Adam(t.adam(t.lr_encoder));
  return s;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

namespace {

void check_finite(const Var& loss, const char* what, std::int64_t step) {
  if (!std::isfinite(static_cast<double>(loss.value().item())))
    throw NumericGuard(std::string("non-finite ") + what + " loss at step " + std::to_string(step));
}

void apply(Adam& opt, nn::Network& net, Tape& tape, Var loss, const nn::Bound& bound, std::int64_t step) {
  std::vector<Tensor> grads = tape.grad_values(loss, bound.params());
  auto params = net.parameters();
  try {
    opt.step(params, grads);
  } catch (const NonFiniteGradient& e) {
    throw NumericGuard(std::string(e.what()) + " (batch " + std::to_string(step) + ")");
  }
}

}  // namespace

Trainer::Trainer(TrainState& state, const TrainingSet& data) : s_(state), data_(data) {
  if (data_.size() == 0) throw DataError("training set is empty");
  const auto n = s_.config.model.resolution;
  for (const auto& t : data_.targets)
    if (t.shape() != Shape{1, n, n, n})
      throw DataError("training target " + to_string(t.shape()) + " does not match resolution " + std::to_string(n));
  const bool vae = s_.config.train.mode == TrainMode::VaeIWGan;
  if (vae) {
    if (data_.conditions.size() != data_.size()) throw DataError("vae-iwgan needs one condition per target");
    const Shape want = s_.config.encoder == NetworkBase::ImageEncoder ? Shape{1, n, n} : Shape{1, n, n, n};
    for (const auto& c : data_.conditions)
      if (c.shape() != want)
        throw DataError("condition " + to_string(c.shape()) + " does not match the " +
                        base_name(s_.config.encoder) + " input " + to_string(want));
  }
  if (batches_per_epoch() == 0)
    throw DataError("training set of " + std::to_string(data_.size()) + " samples is smaller than one batch of " +
                    std::to_string(s_.config.train.batch_size));
}

std::int64_t Trainer::batches_per_epoch() const {
  return static_cast<std::int64_t>(data_.size()) / s_.config.train.batch_size;
}

void Trainer::begin_epoch() {
  const auto n = data_.size();
  s_.order.resize(n);
  for (std::size_t i = 0; i < n; ++i) s_.order[i] = static_cast<std::int64_t>(i);
  for (std::size_t i = n; i > 1; --i) std::swap(s_.order[i - 1], s_.order[s_.rng.below(i)]);
}

void Trainer::step() {
  if (s_.batch_in_epoch == 0) begin_epoch();
  const auto B = s_.config.train.batch_size;
  const auto first = s_.order.begin() + s_.batch_in_epoch * B;
  const std::vector<std::int64_t> batch(first, first + B);
  const bool gen_step = (s_.step + 1) % s_.config.train.gen_interval == 0;

  TelemetryRow row = s_.config.train.mode == TrainMode::VaeIWGan ? step_vae(batch, gen_step) : step_gan(batch, gen_step);
  ++s_.step;
  row.step = s_.step;
  row.epoch = s_.epoch;
  s_.history.push_back(row);
  if (++s_.batch_in_epoch == batches_per_epoch()) {
    s_.batch_in_epoch = 0;
    ++s_.epoch;
  }
}

TelemetryRow Trainer::step_gan(const std::vector<std::int64_t>& batch, bool gen_step) {
  const auto& cfg = s_.config.train;
  const bool vanilla = cfg.mode == TrainMode::VanillaGan;
  const auto B = static_cast<std::int64_t>(batch.size());
  const auto L = s_.config.model.latent_dim;
  TelemetryRow row;
  {
    Tape tape;
    nn::Bound g(s_.generator, tape, false);
    nn::Bound d(s_.discriminator, tape, true);
    Var real = tape.constant(stack_samples(data_.targets, batch));
    Var fake = tape.constant(g(tape.constant(s_.rng.sample_normal({B, L}))).value());
    Var loss;
    if (vanilla) {
      loss = vanilla_gan_losses(d, real, fake).disc;
    } else {
      CriticLoss c = wgan_gp_disc_loss(d, real, fake, s_.rng, cfg.lambda);
      loss = c.loss;
      row.gp_term = c.terms.penalty;
      row.grad_norm_mean = c.terms.grad_norm_mean;
    }
    check_finite(loss, "discriminator", s_.step + 1);
    apply(s_.opt_discriminator, s_.discriminator, tape, loss, d, s_.step + 1);
    ++s_.disc_steps;
    row.d_loss = loss.value().item();
  }
  if (gen_step) {
    Tape tape;
    nn::Bound g(s_.generator, tape, true);
    nn::Bound d(s_.discriminator, tape, false);
    Var fake = g(tape.constant(s_.rng.sample_normal({B, L})));
    Var loss = vanilla ? vanilla_gan_losses(d, fake, fake).gen : wgan_gen_loss(d, fake);
    check_finite(loss, "generator", s_.step + 1);
    apply(s_.opt_generator, s_.generator, tape, loss, g, s_.step + 1);
    ++s_.gen_steps;
    row.g_loss = loss.value().item();
  }
  return row;
}

TelemetryRow Trainer::step_vae(const std::vector<std::int64_t>& batch, bool gen_step) {
  const auto& cfg = s_.config.train;
  TelemetryRow row;
  const Tensor real_t = stack_samples(data_.targets, batch);
  const Tensor cond_t = stack_samples(data_.conditions, batch);
  {
    Tape tape;
    nn::Bound e(s_.encoder, tape, false);
    nn::Bound g(s_.generator, tape, false);
    nn::Bound d(s_.discriminator, tape, true);
    const LatentCode code = reparameterize(e(tape.constant(cond_t)), s_.rng);
    Var fake = tape.constant(g(code.sample).value());
    CriticLoss c = wgan_gp_disc_loss(d, tape.constant(real_t), fake, s_.rng, cfg.lambda);
    check_finite(c.loss, "discriminator", s_.step + 1);
    apply(s_.opt_discriminator, s_.discriminator, tape, c.loss, d, s_.step + 1);
    ++s_.disc_steps;
    row.d_loss = c.loss.value().item();
    row.gp_term = c.terms.penalty;
    row.grad_norm_mean = c.terms.grad_norm_mean;
  }
  VaeOptions opts{cfg.delta, cfg.adversarial_on_reconstruction, false};
  {
    Tape tape;
    nn::Bound e(s_.encoder, tape, true);
    nn::Bound g(s_.generator, tape, false);
    nn::Bound d(s_.discriminator, tape, false);
    VaeLosses l = vae_losses(e, g, d, tape.constant(cond_t), tape.constant(real_t), s_.rng, opts);
    check_finite(l.encoder, "encoder", s_.step + 1);
    apply(s_.opt_encoder, s_.encoder, tape, l.encoder, e, s_.step + 1);
    ++s_.enc_steps;
    row.e_loss = l.encoder.value().item();
  }
  if (gen_step) {
    opts.need_generator_loss = true;
    Tape tape;
    nn::Bound e(s_.encoder, tape, false);
    nn::Bound g(s_.generator, tape, true);
    nn::Bound d(s_.discriminator, tape, false);
    VaeLosses l = vae_losses(e, g, d, tape.constant(cond_t), tape.constant(real_t), s_.rng, opts);
    check_finite(l.generator, "generator", s_.step + 1);
    apply(s_.opt_generator, s_.generator, tape, l.generator, g, s_.step + 1);
    ++s_.gen_steps;
    row.g_loss = l.generator.value().item();
  }
  return row;
}

void Trainer::run_batches(std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) step();
}

void Trainer::run_until_epoch(std::int64_t epochs, const std::function<void(const TrainState&)>& on_epoch) {
  while (s_.epoch < epochs) {
    const auto e = s_.epoch;
    step();
    if (s_.epoch != e && on_epoch) on_epoch(s_);
  }
}

TrainState train_iwgan(const RunConfig& config, const TrainingSet& data) {
  if (config.train.mode == TrainMode::VaeIWGan) throw ConfigError("train_iwgan: mode is vae-iwgan");
  TrainState s = init_state(config);
  Trainer(s, data).run_until_epoch(config.train.epochs);
  return s;
}

TrainState train_vae_iwgan(const RunConfig& config, const TrainingSet& data) {
  RunConfig c = config;
  c.train.mode = TrainMode::VaeIWGan;
  TrainState s = init_state(c);
  Trainer(s, data).run_until_epoch(c.train.epochs);
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kStateMarker = "[state]";

void put_network(container::File& f, const nn::Network& net) {
  for (const auto* p : net.parameters()) f.blocks.push_back(container::Block::from_tensor(p->name, p->value));
  for (const auto& [name, t] : net.buffers()) f.blocks.push_back(container::Block::from_tensor(name, *t));
}

void get_network(const container::File& f, nn::Network& net) {
  for (auto* p : net.parameters()) {
    Tensor t = f.block(p->name).to_tensor();
    if (t.shape() != p->value.shape()) throw container::FormatError("checkpoint: shape mismatch for " + p->name);
    p->value = std::move(t);
  }
  for (auto& [name, t] : net.buffers()) {
    Tensor v = f.block(name).to_tensor();
    if (v.shape() != t->shape()) throw container::FormatError("checkpoint: shape mismatch for " + name);
    *t = std::move(v);
  }
}

void put_adam(container::File& f, const std::string& tag, const Adam& opt) {
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    f.blocks.push_back(container::Block::from_tensor("adam." + tag + ".m." + std::to_string(i), opt.first_moments()[i]));
    f.blocks.push_back(container::Block::from_tensor("adam." + tag + ".v." + std::to_string(i), opt.second_moments()[i]));
  }
}

void get_adam(const container::File& f, const std::string& tag, Adam& opt) {
  for (std::size_t i = 0;; ++i) {
    const auto* m = f.find("adam." + tag + ".m." + std::to_string(i));
    if (!m) break;
    opt.first_moments().push_back(m->to_tensor());
    opt.second_moments().push_back(f.block("adam." + tag + ".v." + std::to_string(i)).to_tensor());
  }
}

}  // namespace

std::string checkpoint_encode(const TrainState& s) {
  container::File f;
  // the output directory is not training state; leaving it out keeps
  // checkpoints of identical runs byte-identical wherever they are written
  RunConfig config = s.config;
  config.out = RunConfig{}.out;
  std::ostringstream meta;
  meta << config.serialize() << kStateMarker << '\n'
       << "step " << s.step << '\n'
       << "epoch " << s.epoch << '\n'
       << "batch_in_epoch " << s.batch_in_epoch << '\n'
       << "disc_steps " << s.disc_steps << '\n'
       << "gen_steps " << s.gen_steps << '\n'
       << "enc_steps " << s.enc_steps << '\n'
       << "adam_steps " << s.opt_generator.steps() << ' ' << s.opt_discriminator.steps() << ' '
       << s.opt_encoder.steps() << '\n'
       << "rng " << s.rng.state() << '\n';
  f.metadata = meta.str();
  put_network(f, s.generator);
  put_network(f, s.discriminator);
  put_network(f, s.encoder);
  put_adam(f, "generator", s.opt_generator);
  put_adam(f, "discriminator", s.opt_discriminator);
  put_adam(f, "encoder", s.opt_encoder);
  f.blocks.push_back(container::Block::from_i64("order", s.order));

  std::vector<double> hist;
  const double nan = std::nan("");
  for (const auto& r : s.history) {
    const double row[] = {static_cast<double>(r.step), static_cast<double>(r.epoch), r.d_loss, r.g_loss.value_or(nan),
                          r.gp_term, r.grad_norm_mean, r.e_loss.value_or(nan)};
    hist.insert(hist.end(), std::begin(row), std::end(row));
  }
  f.blocks.push_back(container::Block::from_doubles("history", {s.history.size(), 7}, hist));
  return container::encode(f);
}

TrainState checkpoint_decode(const std::string& bytes) {
  const container::File f = container::decode(bytes);
  const auto cut = f.metadata.find(std::string(kStateMarker) + "\n");
  if (cut == std::string::npos) throw container::FormatError("checkpoint: metadata has no state section");

  RunConfig config = parse_config(f.metadata.substr(0, cut), "<checkpoint>");
  // Network shapes come from the config; the seeded values are overwritten below.
  TrainState s = init_state(config);

  std::istringstream is(f.metadata.substr(cut + std::string(kStateMarker).size() + 1));
  std::string key;
  std::int64_t adam_g = 0, adam_d = 0, adam_e = 0;
  std::string rng_state;
  while (is >> key) {
    if (key == "step") is >> s.step;
    else if (key == "epoch") is >> s.epoch;
    else if (key == "batch_in_epoch") is >> s.batch_in_epoch;
    else if (key == "disc_steps") is >> s.disc_steps;
    else if (key == "gen_steps") is >> s.gen_steps;
    else if (key == "enc_steps") is >> s.enc_steps;
    else if (key == "adam_steps") is >> adam_g >> adam_d >> adam_e;
    else if (key == "rng") {
      std::getline(is, rng_state);
    } else {
      throw container::FormatError("checkpoint: unknown state key '" + key + "'");
    }
    if (!is && !is.eof()) throw container::FormatError("checkpoint: malformed value for '" + key + "'");
  }
  if (rng_state.empty()) throw container::FormatError("checkpoint: missing rng state");
  try {
    s.rng.restore(rng_state);
  } catch (const std::exception& e) {
    throw container::FormatError(std::string("checkpoint: ") + e.what());
  }

  get_network(f, s.generator);
  get_network(f, s.discriminator);
  get_network(f, s.encoder);
  get_adam(f, "generator", s.opt_generator);
  get_adam(f, "discriminator", s.opt_discriminator);
  get_adam(f, "encoder", s.opt_encoder);
  s.opt_generator.set_steps(adam_g);
  s.opt_discriminator.set_steps(adam_d);
  s.opt_encoder.set_steps(adam_e);
  s.order = f.block("order").to_i64();

  const auto hist = f.block("history").to_doubles();
  if (hist.size() % 7 != 0) throw container::FormatError("checkpoint: history block is not 7 columns wide");
  auto opt = [](double v) { return std::isnan(v) ? std::nullopt : std::optional<double>(v); };
  for (std::size_t i = 0; i < hist.size(); i += 7) {
    TelemetryRow r;
    r.step = static_cast<std::int64_t>(hist[i]);
    r.epoch = static_cast<std::int64_t>(hist[i + 1]);
    r.d_loss = hist[i + 2];
    r.g_loss = opt(hist[i + 3]);
    r.gp_term = hist[i + 4];
    r.grad_norm_mean = hist[i + 5];
    r.e_loss = opt(hist[i + 6]);
    s.history.push_back(r);
  }
  return s;
}

void checkpoint_save(const TrainState& state, const std::filesystem::path& path) {
  write_all(path, checkpoint_encode(state));
}

TrainState checkpoint_load(const std::filesystem::path& path) { return checkpoint_decode(read_all(path)); }

}  // namespace voxgan
