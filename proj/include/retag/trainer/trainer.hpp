#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "retag/metrics/metrics.hpp"
#include "retag/model/retag_model.hpp"
#include "retag/numerics/adamw.hpp"

namespace retag {

struct TrainConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double beta = 0.25;  // commitment weight
  int epochs = 10;
  int batch_size = 8;
  std::uint64_t seed = 0;
  int stage1_steps = 500;
  int stage2_steps = 1500;
  int finetune_steps = 0;  // 0: epochs * batches per epoch
  bool ci_enabled = true;
  double clip_norm = 1.0;

  void validate() const {
    adamw().validate();
    if (!(beta >= 0)) throw ConfigError("train: beta must be >= 0");
    if (epochs < 0 || stage1_steps < 0 || stage2_steps < 0 || finetune_steps < 0)
      throw ConfigError("train: step and epoch counts must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(clip_norm > 0)) throw ConfigError("train: clip_norm must be > 0");
  }

  AdamWConfig adamw() const { return {lr, beta1, beta2, eps, weight_decay}; }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay},
          {"beta", c.beta},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"stage1_steps", c.stage1_steps},
          {"stage2_steps", c.stage2_steps},
          {"finetune_steps", c.finetune_steps},
          {"ci_enabled", c.ci_enabled},
          {"clip_norm", c.clip_norm}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k == "lr") c.lr = it->get<double>();
    else if (k == "beta1") c.beta1 = it->get<double>();
    else if (k == "beta2") c.beta2 = it->get<double>();
    else if (k == "eps") c.eps = it->get<double>();
    else if (k == "weight_decay") c.weight_decay = it->get<double>();
    else if (k == "beta") c.beta = it->get<double>();
    else if (k == "epochs") c.epochs = it->get<int>();
    else if (k == "batch_size") c.batch_size = it->get<int>();
    else if (k == "seed") c.seed = it->get<std::uint64_t>();
    else if (k == "stage1_steps") c.stage1_steps = it->get<int>();
    else if (k == "stage2_steps") c.stage2_steps = it->get<int>();
    else if (k == "finetune_steps") c.finetune_steps = it->get<int>();
    else if (k == "ci_enabled") c.ci_enabled = it->get<bool>();
    else if (k == "clip_norm") c.clip_norm = it->get<double>();
    else throw ConfigError("train: unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

/// Which loss terms take part in a step.
struct LossSwitches {
  bool gen = true;
  bool ci = true;
  bool vq = true;
};

struct LossTerms {
  double total = 0, gen = 0, ci = 0, codebook = 0, commitment = 0;
};

template <typename T>
struct Loss {
  Tensor<T> total;
  LossTerms terms;
};

/// L = CE_gen + CE_ci + codebook + commitment (beta already applied), each
/// term present only when switched on. Pad targets are ignored.
template <typename T>
Loss<T> total_loss(const ForwardOutput<T>& fwd, std::span<const int> targets, bool analytical, LossSwitches on) {
  Loss<T> out;
  auto accumulate = [&](const Tensor<T>& term, double& slot) {
    slot = static_cast<double>(term.item());
    out.total = out.total.defined() ? add(out.total, term) : term;
  };
  if (on.gen) {
    if (!fwd.logits.defined()) throw ContractError("total_loss: generative term needs decoder logits");
    accumulate(cross_entropy(fwd.logits, targets, Vocab::kPad), out.terms.gen);
  }
  if (on.ci) {
    const int kind[1] = {analytical ? 1 : 0};
    accumulate(cross_entropy(fwd.ci_logits, std::span<const int>(kind, 1)), out.terms.ci);
  }
  if (on.vq) {
    accumulate(fwd.codebook_loss, out.terms.codebook);
    accumulate(fwd.commitment_loss, out.terms.commitment);
  }
  if (!out.total.defined()) throw ContractError("total_loss: every term is switched off");
  out.terms.total = static_cast<double>(out.total.item());
  return out;
}

struct TrainRecord {
  std::string stage;  // stage1, stage2 or finetune
  int step = 0;
  LossTerms loss;
  double grad_norm = 0;
  int analytical = 0, descriptive = 0;  // batch composition
  double wall_ms = 0;
};

struct TrainReport {
  std::vector<TrainRecord> records;
  std::uint64_t seed = 0;
  double wall_seconds = 0;
  std::vector<std::string> warnings;
  std::string checkpoint;

  void append(const TrainReport& other) {
    records.insert(records.end(), other.records.begin(), other.records.end());
    warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
    wall_seconds += other.wall_seconds;
  }
};

inline nlohmann::json to_json(const TrainRecord& r) {
  return {{"stage", r.stage},
          {"step", r.step},
          {"total", r.loss.total},
          {"gen", r.loss.gen},
          {"ci", r.loss.ci},
          {"codebook", r.loss.codebook},
          {"commitment", r.loss.commitment},
          {"grad_norm", r.grad_norm},
          {"analytical", r.analytical},
          {"descriptive", r.descriptive},
          {"meta", {{"wall_ms", r.wall_ms}}}};
}

inline nlohmann::json summary_json(const TrainReport& rep) {
  nlohmann::json j{{"seed", rep.seed},
                   {"steps", rep.records.size()},
                   {"warnings", rep.warnings},
                   {"checkpoint", rep.checkpoint},
                   {"meta", {{"wall_seconds", rep.wall_seconds}}}};
  if (!rep.records.empty()) j["final"] = to_json(rep.records.back());
  return j;
}

/// Called after backward and before the optimizer step.
template <typename T>
using StepObserver = std::function<void(const TrainRecord&, const ModelParams<T>&)>;

inline std::vector<EncodedExample> encode_corpus(const Vocab& vocab, const std::vector<Instance>& data,
                                                 Strategy strategy) {
  std::vector<EncodedExample> out;
  out.reserve(data.size());
  for (const auto& inst : data) out.push_back(encode_example(vocab, inst, strategy));
  return out;
}

/// One optimizer step over a batch: the mean of per-example losses.
template <typename T>
TrainRecord train_step(ModelParams<T>& p, AdamW<T>& opt, const std::vector<const EncodedExample*>& batch,
                       const TrainConfig& cfg, LossSwitches on, bool run_decoder, Rng* drop,
                       const std::type_identity_t<StepObserver<T>>& observer = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const Strategy strategy = p.config.strategy;
  TrainRecord rec;
  Tensor<T> sum;
  const T inv = T(1) / static_cast<T>(batch.size());
  for (const auto* ex : batch) {
    auto fwd = forward_train(p, *ex, strategy, static_cast<T>(cfg.beta), drop, run_decoder);
    auto loss = total_loss(fwd, std::span<const int>(ex->target), ex->analytical, on);
    sum = sum.defined() ? add(sum, loss.total) : loss.total;
    rec.loss.gen += loss.terms.gen;
    rec.loss.ci += loss.terms.ci;
    rec.loss.codebook += loss.terms.codebook;
    rec.loss.commitment += loss.terms.commitment;
    (ex->analytical ? rec.analytical : rec.descriptive) += 1;
  }
  auto mean_loss = scale(sum, inv);
  for (double* t : {&rec.loss.gen, &rec.loss.ci, &rec.loss.codebook, &rec.loss.commitment}) *t /= static_cast<double>(batch.size());
  rec.loss.total = static_cast<double>(mean_loss.item());
  p.zero_grad();
  backward(mean_loss);
  rec.grad_norm = clip_grad_norm(p.tensors, cfg.clip_norm);
  if (!std::isfinite(rec.grad_norm)) throw NumericError("training diverged: non-finite gradient norm");
  if (observer) observer(rec, p);
  opt.step(p.tensors);
  p.zero_grad();
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

namespace detail {

// Endless reshuffled pass over [0, n).
class EpochSampler {
 public:
  EpochSampler(std::size_t n, Rng rng) : rng_(rng), order_(n) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    pos_ = n;
  }
  std::size_t next() {
    if (pos_ == order_.size()) {
      rng_.shuffle(std::span<std::size_t>(order_));
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Two-stage codebook pretraining. Stage 1 optimizes the codebook and
/// commitment terms without running the decoder; stage 2 adds the
/// generative term. The CI term is never used. Models without codebooks skip
/// stage 1.
template <typename T>
TrainReport pretrain(ModelParams<T>& p, const std::vector<EncodedExample>& corpus, const TrainConfig& cfg,
                     const std::type_identity_t<StepObserver<T>>& observer = {}) {
  cfg.validate();
  if (corpus.empty()) throw DataError("pretrain: empty corpus");
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport rep;
  rep.seed = cfg.seed;
  AdamW<T> opt(cfg.adamw());
  Rng drop(cfg.seed, "dropout");
  detail::EpochSampler sampler(corpus.size(), Rng(cfg.seed, "data").split("pretrain"));
  const bool codebooks = p.config.strategy == Strategy::ReTAG;
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), corpus.size());
  auto run = [&](const char* stage, int steps, LossSwitches on, bool decoder) {
    for (int s = 0; s < steps; ++s) {
      std::vector<const EncodedExample*> batch;
      for (std::size_t i = 0; i < bs; ++i) batch.push_back(&corpus[sampler.next()]);
      auto rec = train_step(p, opt, batch, cfg, on, decoder, &drop, [&](const TrainRecord& r, const ModelParams<T>& m) {
        if (!observer) return;
        TrainRecord tagged = r;
        tagged.stage = stage;
        tagged.step = s;
        observer(tagged, m);
      });
      rec.stage = stage;
      rec.step = s;
      rep.records.push_back(rec);
    }
  };
  if (codebooks) run("stage1", cfg.stage1_steps, {false, false, true}, false);
  run("stage2", cfg.stage2_steps, {true, false, codebooks}, true);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Batches for one fine-tuning epoch. When both kinds are present every
/// batch gets at least one analytical and one descriptive example while both
/// last; the remaining examples fill the batches in shuffled order.
inline std::vector<std::vector<std::size_t>> stratified_batches(const std::vector<EncodedExample>& data,
                                                                std::size_t batch_size, Rng& rng, bool stratify) {
  const std::size_t n = data.size();
  const std::size_t nb = (n + batch_size - 1) / batch_size;
  std::vector<std::vector<std::size_t>> batches(nb);
  std::vector<std::size_t> ana, desc, rest;
  for (std::size_t i = 0; i < n; ++i) (data[i].analytical ? ana : desc).push_back(i);
  rng.shuffle(std::span<std::size_t>(ana));
  rng.shuffle(std::span<std::size_t>(desc));
  std::size_t ia = 0, id = 0;
  if (stratify) {
    for (auto& b : batches) {
      if (ia < ana.size() && id < desc.size()) {
        b.push_back(ana[ia++]);
        b.push_back(desc[id++]);
      }
    }
  }
  rest.insert(rest.end(), ana.begin() + static_cast<std::ptrdiff_t>(ia), ana.end());
  rest.insert(rest.end(), desc.begin() + static_cast<std::ptrdiff_t>(id), desc.end());
  rng.shuffle(std::span<std::size_t>(rest));
  std::size_t r = 0;
  for (auto& b : batches)
    while (b.size() < batch_size && r < rest.size()) b.push_back(rest[r++]);
  batches.erase(std::remove_if(batches.begin(), batches.end(), [](const auto& b) { return b.empty(); }), batches.end());
  rng.shuffle(std::span<std::vector<std::size_t>>(batches));
  return batches;
}

/// Fine-tuning with every enabled term. The CI term is active when
/// cfg.ci_enabled and the model uses codebooks.
template <typename T>
TrainReport finetune(ModelParams<T>& p, const std::vector<EncodedExample>& corpus, const TrainConfig& cfg,
                     const std::type_identity_t<StepObserver<T>>& observer = {}) {
  cfg.validate();
  if (corpus.empty()) throw DataError("finetune: empty corpus");
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport rep;
  rep.seed = cfg.seed;
  const bool codebooks = p.config.strategy == Strategy::ReTAG;
  const LossSwitches on{true, cfg.ci_enabled && codebooks, codebooks};
  const bool has_ana = std::any_of(corpus.begin(), corpus.end(), [](const auto& e) { return e.analytical; });
  const bool has_desc = std::any_of(corpus.begin(), corpus.end(), [](const auto& e) { return !e.analytical; });
  const bool stratify = has_ana && has_desc && cfg.batch_size >= 2;
  if (!(has_ana && has_desc) && cfg.ci_enabled) {
    rep.warnings.emplace_back("finetune: corpus holds a single kind; batches are not stratified");
    std::cerr << "warning: " << rep.warnings.back() << "\n";
  }
  AdamW<T> opt(cfg.adamw());
  Rng drop(cfg.seed, "dropout");
  Rng order = Rng(cfg.seed, "data").split("finetune");
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const long per_epoch = static_cast<long>((corpus.size() + bs - 1) / bs);
  const long total = cfg.finetune_steps > 0 ? cfg.finetune_steps : per_epoch * cfg.epochs;
  long step = 0;
  while (step < total) {
    for (const auto& idx : stratified_batches(corpus, bs, order, stratify)) {
      if (step >= total) break;
      std::vector<const EncodedExample*> batch;
      for (auto i : idx) batch.push_back(&corpus[i]);
      auto rec = train_step(p, opt, batch, cfg, on, true, &drop, [&](const TrainRecord& r, const ModelParams<T>& m) {
        if (!observer) return;
        TrainRecord tagged = r;
        tagged.stage = "finetune";
        tagged.step = static_cast<int>(step);
        observer(tagged, m);
      });
      rec.stage = "finetune";
      rec.step = static_cast<int>(step);
      rep.records.push_back(rec);
      ++step;
    }
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

struct EvalOptions {
  int beam = 10;
  int max_len = 64;
  std::optional<Strategy> strategy;  // defaults to the model's
  bool random_tags = false;
  std::uint64_t seed = 0;
  std::optional<CategorySet> tags;  // forced tags for every instance
  MetricConfig metric;
  int threads = 1;
};

/// Uniform draw over the 31 non-empty subsets of the analytical categories.
inline CategorySet random_analytical_tags(Rng& rng) {
  return CategorySet(static_cast<std::uint8_t>(rng.uniform_int(1, (1 << kNumAnalytical) - 1)));
}

struct Generation {
  std::string question;
  std::string text;
  double log_prob = 0;
  CategorySet tags;
  bool predicted_analytical = false;
};

template <typename T>
Generation generate_for(const ModelParams<T>& p, const Vocab& vocab, const Instance& inst, Strategy strategy,
                        CategorySet tags, int beam, int max_len) {
  Generation g;
  g.tags = tags;
  g.question = build_question(strategy, tags);
  const auto ex = encode_example(vocab, inst, strategy, tags);
  const auto h = generate(p, std::span<const int>(ex.input_ids), strategy, tags, beam, max_len);
  g.text = vocab.decode(h.tokens);
  g.log_prob = h.log_prob;
  NoGradGuard ng;
  const auto memory = inference_memory(p, std::span<const int>(ex.input_ids), strategy, tags);
  const auto logits = classify_ci(p, memory, std::span<const std::uint8_t>());
  g.predicted_analytical = logits[1] > logits[0];
  return g;
}

/// Runs `work(i)` for i in [0, n) on up to `threads` workers; the first
/// exception is rethrown.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& work) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          work(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Generates for every instance and scores the outputs. With random tags,
/// analytical instances get a uniformly random analytical tag set drawn from
/// stream "random-tags" in input order; descriptive instances keep theirs.
template <typename T>
EvalReport evaluate(const ModelParams<T>& p, const Vocab& vocab, const std::vector<Instance>& data,
                    const EvalOptions& opt) {
  opt.metric.validate();
  if (data.empty()) throw DataError("evaluate: empty dataset");
  const Strategy strategy = opt.strategy.value_or(p.config.strategy);
  std::vector<CategorySet> tags(data.size());
  Rng tag_rng(opt.seed, "random-tags");
  for (std::size_t i = 0; i < data.size(); ++i) {
    tags[i] = opt.tags.value_or(data[i].categories);
    if (opt.random_tags && data[i].analytical()) tags[i] = random_analytical_tags(tag_rng);
  }
  std::vector<EvalRecord> records(data.size());
  parallel_for(data.size(), opt.threads, [&](std::size_t i) {
    const auto g = generate_for(p, vocab, data[i], strategy, tags[i], opt.beam, opt.max_len);
    records[i] = score_instance(data[i], g.text, opt.metric);
    records[i].ci_correct = g.predicted_analytical == data[i].analytical();
  });
  auto rep = make_eval_report(std::move(records), opt.metric.bleu_order);
  rep.meta = {{"strategy", strategy_name(strategy)},
              {"beam", opt.beam},
              {"max_len", opt.max_len},
              {"random_tags", opt.random_tags},
              {"seed", opt.seed}};
  return rep;
}

/// Scores gold references against themselves (metric sanity baseline).
inline EvalReport evaluate_references(const std::vector<Instance>& data, const MetricConfig& mc = {}) {
  std::vector<EvalRecord> records;
  for (const auto& inst : data) records.push_back(score_instance(inst, inst.reference, mc));
  return make_eval_report(std::move(records), mc.bleu_order);
}

}  // namespace retag
