#include "fedcl/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <iostream>
#include <random>
#include <thread>

#include "fedcl/curriculum.hpp"
#include "fedcl/errors.hpp"
#include "fedcl/losses.hpp"

namespace fedcl {

std::size_t worker_threads() {
  if (const char* env = std::getenv("FEDCL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

ClientReport client_local_update(const Broadcast& broadcast, const Dataset& local,
                                 const RunConfig& cfg, const ClientContext& ctx) {
  if (local.empty()) throw DataError("client " + std::to_string(ctx.client_id) + " has no data");
  ClientReport rep;
  rep.client_id = ctx.client_id;
  rep.model = broadcast.model;
  rep.label_counter.assign(broadcast.model.num_classes(), 0);

  const bool fedcl = cfg.algorithm == Algorithm::FedCL;
  LossSpec spec;
  spec.curriculum = cfg.curriculum;
  if (!fedcl) spec.curriculum.enabled = false;
  if (cfg.algorithm == Algorithm::FedProx) {
    spec.prox_mu = cfg.prox_mu;
    spec.prox_anchor = &broadcast.model;
  }
  const bool distill = fedcl && cfg.generator_enabled && cfg.distill_weight > 0.0 &&
                       broadcast.generator.has_value() && broadcast.pool.has_value();
  if (distill) spec.distill_weight = cfg.distill_weight;

  Rng batch_rng = make_rng(ctx.master_seed, "client-batch", ctx.round, ctx.client_id);
  Rng distill_rng = make_rng(ctx.master_seed, "client-distill", ctx.round, ctx.client_id);
  std::uniform_int_distribution<std::size_t> pick(0, local.size() - 1);
  auto opt = OptimizerState::sgd(cfg.client_lr);
  std::vector<std::size_t> idx(cfg.batch_size);
  double loss_sum = 0.0;

  for (std::size_t t = 0; t < cfg.local_steps; ++t) {
    for (auto& i : idx) i = pick(batch_rng);
    const Dataset batch = local.subset(idx);
    for (int y : batch.labels) ++rep.label_counter[static_cast<std::size_t>(y)];
    DistillBatch db;
    if (distill) {
      db = sample_distill_batch(*broadcast.generator, broadcast.prior, *broadcast.pool,
                                cfg.distill_batch, distill_rng);
      spec.distill = &db;
    }
    GradientVec g;
    try {
      g = backward(rep.model, batch, spec);
    } catch (const NumericError& e) {
      throw NumericError("round " + std::to_string(ctx.round) + " client " +
                             std::to_string(ctx.client_id) + " step " + std::to_string(t) +
                             ": " + e.what(),
                         e.sample_index());
    }
    step(rep.model, g, opt);
    loss_sum += g.loss;
    ++rep.local_steps_run;
  }
  rep.mean_local_loss =
      rep.local_steps_run ? loss_sum / static_cast<double>(rep.local_steps_run) : 0.0;

  if (fedcl && cfg.sync_enabled) {
    const auto risk = empirical_cl_risk(rep.model, local, cfg.curriculum);
    rep.gmm = fit_em(risk.scores, cfg.gmm,
                     derive_seed(ctx.master_seed, "gmm", ctx.round, ctx.client_id))
                  .gmm;
  }
  return rep;
}

ModelParams average_models(std::span<const ModelParams* const> models) {
  if (models.empty()) throw std::invalid_argument("average of zero models");
  ModelParams out = *models.front();
  auto acc = out.stack.values();
  for (std::size_t m = 1; m < models.size(); ++m) {
    if (!models[m]->stack.same_shape(out.stack)) throw ShapeError("aggregated models differ in shape");
    const auto v = models[m]->stack.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(models.size());
  for (double& v : acc) v *= inv;
  return out;
}

ModelParams aggregate(std::span<const ClientReport> live,
                      std::span<const ModelParams> frozen, std::size_t num_clients) {
  if (live.size() + frozen.size() != num_clients)
    throw ProtocolError("aggregation needs one parameter vector per client: got " +
                        std::to_string(live.size() + frozen.size()) + " of " +
                        std::to_string(num_clients));
  std::vector<const ModelParams*> ptrs;
  for (const auto& r : live) ptrs.push_back(&r.model);
  for (const auto& m : frozen) ptrs.push_back(&m);
  return average_models(ptrs);
}

double evaluate(const ModelParams& model, const Dataset& test) {
  if (test.empty()) throw DataError("evaluation on an empty test set");
  std::size_t correct = 0;
  Trace f, h;
  const auto& st = model.stack;
  for (std::size_t i = 0; i < test.size(); ++i) {
    run_layers(st, 0, model.split_index, true, test.row(i), f);
    run_layers(st, model.split_index, st.layer_count(), false, f.acts.back(), h);
    const auto& lg = h.acts.back();
    const auto best = static_cast<int>(std::max_element(lg.begin(), lg.end()) - lg.begin());
    if (best == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::uint64_t model_hash(const ModelParams& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : m.stack.values()) {
    unsigned char b[sizeof(double)];
    std::memcpy(b, &v, sizeof v);
    for (auto c : b) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

ExperimentData build_experiment_data(const RunConfig& cfg) {
  ExperimentData d;
  Dataset full;
  if (cfg.dataset == DatasetKind::Blobs) {
    const auto data_seed = derive_seed(cfg.seed, "data");
    full = make_blobs(cfg.blob_classes, cfg.blob_per_class, cfg.blob_dim, cfg.blob_spread, data_seed);
    d.test = make_blobs_split(cfg.blob_classes, cfg.blob_test_per_class, cfg.blob_dim,
                              cfg.blob_spread, data_seed, 1);
  } else {
    full = load_idx(cfg.mnist_train_images, cfg.mnist_train_labels);
    d.test = load_idx(cfg.mnist_test_images, cfg.mnist_test_labels);
    if (cfg.mnist_train_limit) full = take_rows(full, cfg.mnist_train_limit);
    if (cfg.mnist_test_limit) d.test = take_rows(d.test, cfg.mnist_test_limit);
  }
  const auto keep = stratified_fraction(full, cfg.client_fraction,
                                        derive_seed(cfg.seed, "client-fraction"));
  d.train = full.subset(keep);
  d.partition = dirichlet_partition(d.train, cfg.num_clients, cfg.dirichlet_alpha,
                                    derive_seed(cfg.seed, "partition"));
  for (const auto& idx : d.partition.clients) d.clients.push_back(d.train.subset(idx));
  return d;
}

ModelParams initial_model(const RunConfig& cfg, std::size_t input_dim, std::size_t classes) {
  ClassifierArch arch;
  arch.input_dim = input_dim;
  arch.feature_widths = cfg.feature_widths;
  arch.num_classes = classes;
  return init_classifier(arch, derive_seed(cfg.seed, "init-model"));
}

namespace {

// Evenly spaced stand-in for the difficulty distribution before any client
// has reported.
GlobalPool uniform_pool(std::size_t clients, std::size_t per_client) {
  GlobalPool p;
  const std::size_t n = clients * per_client;
  p.sorted_samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    p.sorted_samples[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  p.per_client_counts.assign(clients, per_client);
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------

Server::Server(const RunConfig& cfg, const ExperimentData& data)
    : cfg_(cfg),
      data_(&data),
      global_(initial_model(cfg, data.train.dim, data.train.num_classes)),
      prior_(LabelPrior::uniform(data.train.num_classes)),
      sync_(cfg.sync_enabled
                ? ordered_schedule(cfg.schedule, cfg.schedule_order)
                : std::vector<double>{cfg.schedule.front()},
            cfg.num_clients, cfg.temperature_v),
      cached_models_(cfg.num_clients),
      cached_gmms_(cfg.num_clients),
      cached_counters_(cfg.num_clients) {
  cfg_.validate();
  if (data.clients.size() != cfg.num_clients)
    throw DataError("experiment data has " + std::to_string(data.clients.size()) +
                    " clients, config expects " + std::to_string(cfg.num_clients));
  if (is_fedcl()) {
    if (cfg.generator_enabled) {
      GeneratorArch ga;
      ga.num_classes = data.train.num_classes;
      ga.noise_dim = cfg.noise_dim;
      ga.hidden = {cfg.generator_hidden};
      ga.latent_dim = global_.feature_dim();
      generator_ = init_generator(ga, derive_seed(cfg.seed, "init-generator"));
      gen_opt_ = OptimizerState::adam(cfg.generator_lr, generator_->stack.size());
    }
    pool_ = uniform_pool(cfg.num_clients, cfg.pool_samples_per_client);
    if (cfg.sync_enabled) sync_.refresh_threshold(*pool_);
  }
}

Broadcast Server::make_broadcast() const {
  Broadcast b;
  b.model = global_;
  b.generator = generator_;
  b.prior = prior_;
  b.pool = pool_;
  b.state_index = sync_.state_index();
  b.threshold = sync_.threshold();
  return b;
}

std::vector<std::size_t> Server::select_active() {
  auto live = sync_.live();
  const auto want = static_cast<std::size_t>(
      std::llround(cfg_.active_ratio * static_cast<double>(cfg_.num_clients)));
  const std::size_t count = std::min(live.size(), std::max<std::size_t>(1, want));
  Rng rng = make_rng(cfg_.seed, "select", round_);
  std::shuffle(live.begin(), live.end(), rng);
  live.resize(count);
  std::sort(live.begin(), live.end());
  return live;
}

std::vector<ClientReport> Server::run_clients(const Broadcast& b,
                                              const std::vector<std::size_t>& active) const {
  std::vector<std::optional<ClientReport>> slots(active.size());
  std::vector<std::exception_ptr> errors(active.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next++; i < active.size(); i = next++) {
      try {
        const auto k = active[i];
        slots[i] = client_local_update(b, data_->clients[k], cfg_,
                                       ClientContext{cfg_.seed, round_, k});
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(worker_threads(), active.size());
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<ClientReport> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

double Server::refresh_generator() {
  std::vector<ModelParams> heads;
  for (const auto& m : cached_models_)
    if (m) heads.push_back(*m);
  if (heads.empty() || cfg_.generator_steps == 0) return 0.0;
  auto trained = train_generator(std::move(*generator_), heads, prior_, *pool_,
                                 cfg_.generator_steps, gen_opt_, cfg_.generator_batch,
                                 cfg_.curriculum, derive_seed(cfg_.seed, "generator", round_));
  generator_ = std::move(trained.gen);
  double mean = 0.0;
  for (double l : trained.losses) mean += l;
  return mean / static_cast<double>(trained.losses.size());
}

void Server::update_sync(std::size_t round_no) {
  std::vector<GmmParams> gmms;
  for (const auto& g : cached_gmms_)
    if (g) gmms.push_back(*g);
  if (gmms.empty()) return;
  pool_ = build_global_pool(gmms, cfg_.pool_samples_per_client,
                            derive_seed(cfg_.seed, "pool", round_no));
  const double beta = sync_.refresh_threshold(*pool_);

  const auto before = sync_.frozen();
  for (auto k : sync_.live()) {
    if (!cached_gmms_[k]) continue;
    const auto samples = sample(*cached_gmms_[k], cfg_.pool_samples_per_client,
                                derive_seed(cfg_.seed, "freeze", round_no, k));
    if (freeze_decision(samples, beta, cfg_.temperature_v)) {
      sync_.freeze(k);
      events_.push_back({round_no, sync_.state_index(), sync_.frozen_count(), beta, "freeze"});
    }
  }
  // Frozen clients stay frozen until the state advances.
  for (auto k : before)
    if (!sync_.is_frozen(k)) throw ProtocolError("client " + std::to_string(k) + " left the frozen set");
  ++monotonicity_checks_;
}

MetricsRow Server::run_round() {
  if (finished_) throw ProtocolError("run_round after training completed");
  const auto t0 = std::chrono::steady_clock::now();
  ++round_;
  ++rounds_in_state_;

  const auto active = select_active();
  last_active_ = active;
  const Broadcast b = make_broadcast();
  auto reports = run_clients(b, active);

  for (auto& r : reports) {
    cached_models_[r.client_id] = r.model;
    cached_counters_[r.client_id] = r.label_counter;
    if (!r.gmm.components.empty()) cached_gmms_[r.client_id] = r.gmm;
  }

  // One vector per client: fresh reports, cached models of frozen clients,
  // and the broadcast model for live clients not selected this round.
  std::vector<const ModelParams*> slots(cfg_.num_clients, &b.model);
  for (auto k : sync_.frozen())
    if (cached_models_[k]) slots[k] = &*cached_models_[k];
  for (const auto& r : reports) slots[r.client_id] = &r.model;
  global_ = average_models(slots);

  MetricsRow row;
  row.round = round_;
  row.state_index = sync_.state_index();
  row.algorithm = std::string(to_string(cfg_.algorithm));
  row.seed = cfg_.seed;
  double loss = 0.0;
  for (const auto& r : reports) loss += r.mean_local_loss;
  row.mean_client_loss = reports.empty() ? 0.0 : loss / static_cast<double>(reports.size());

  if (is_fedcl()) {
    std::vector<std::vector<std::uint64_t>> counters;
    for (const auto& c : cached_counters_)
      if (!c.empty()) counters.push_back(c);
    if (!counters.empty()) {
      try {
        prior_ = update_label_prior(counters);
      } catch (const DataError&) {
        // all-zero counters (zero local steps): keep the previous prior
      }
    }
    if (generator_) row.generator_loss = refresh_generator();
    if (cfg_.sync_enabled) {
      update_sync(round_);
      row.frozen_count = sync_.frozen_count();
      const double beta = sync_.threshold().value_or(0.0);
      if (sync_.all_frozen()) {
        const bool more = sync_.advance(&*pool_);
        rounds_in_state_ = 0;
        events_.push_back({round_, sync_.state_index(), 0, sync_.threshold().value_or(beta),
                           more ? "advance" : "complete"});
        finished_ = !more;
      } else if (cfg_.state_round_cap > 0 && rounds_in_state_ >= cfg_.state_round_cap) {
        std::clog << "fedcl: round cap reached in training state " << sync_.state_index()
                  << " with " << sync_.live().size() << " live clients; advancing\n";
        const bool more = sync_.force_advance(&*pool_);
        rounds_in_state_ = 0;
        events_.push_back({round_, sync_.state_index(), 0, sync_.threshold().value_or(beta),
                           more ? "forced_advance" : "complete"});
        finished_ = !more;
      }
    }
  }

  row.test_accuracy = evaluate(global_, data_->test);
  if (cfg_.record_wall_time)
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

RunResult run_training(const RunConfig& cfg, const ExperimentData& data) {
  cfg.validate();
  Server server(cfg, data);
  RunResult res;
  res.partition_hash = data.partition.hash();
  res.init_hash = model_hash(server.global_model());
  while (!server.finished() && server.round() < cfg.rounds) res.history.push_back(server.run_round());
  res.final_model = server.global_model();
  res.events = server.events();
  res.monotonicity_checks = server.monotonicity_checks();
  return res;
}

RunResult run_training(const RunConfig& cfg) {
  cfg.validate();
  const auto data = build_experiment_data(cfg);
  return run_training(cfg, data);
}

}  // namespace fedcl
