// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero
// when any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "retag/cli/verification.hpp"
#include "retag/codebook/codebook.hpp"
#include "retag/corpus/heuristic.hpp"
#include "retag/io/checkpoint.hpp"
#include "retag/metrics/metrics.hpp"
#include "retag/trainer/experiment.hpp"

using namespace retag;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double mean(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return xs.empty() ? 0 : s / static_cast<double>(xs.size());
}

// Directional comparison with the 0.3 BLEU-1 tie band.
Outcome directional(const std::string& what, double a, double b) {
  const double diff = a - b;
  std::string verdict = diff >= 0 ? "holds" : (diff >= -0.3 ? "inconclusive (tie within 0.3)" : "reversed");
  return {diff >= -0.3, what + fmt(": %.2f vs %.2f (diff %+.2f) ", a, b, diff) + verdict};
}

// ---- desk experiment ------------------------------------------------------

RunConfig desk_config() {
  RunConfig rc;
  rc.model.layers = 2;
  rc.model.heads = 4;
  rc.model.hidden = 32;
  rc.model.ffn = 64;
  rc.model.codebook_size = 32;
  rc.model.max_len = 128;
  rc.train.lr = 1e-3;
  rc.train.batch_size = 8;
  rc.train.stage1_steps = 100;
  rc.train.stage2_steps = 200;
  rc.train.finetune_steps = 300;
  rc.eval.beam = 1;
  rc.eval.max_len = 40;
  return rc;
}

struct Desk {
  RunConfig config = desk_config();
  ExperimentData data;
  Vocab vocab;
};

Desk make_desk() {
  Desk d;
  auto spec = GeneratorSpec::defaults();
  spec.seed = 11;
  auto all = synth_generate(spec, 700);
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i].split = i < 600 ? Split::Train : Split::Test;
    (i < 600 ? d.data.train : d.data.test).push_back(all[i]);
  }
  auto pre = GeneratorSpec::analytical_only();
  pre.seed = 12;
  d.data.pretrain = synth_generate(pre, 400);
  d.vocab = corpus_vocab({&d.data.pretrain, &d.data.train, &d.data.test});
  return d;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

}  // namespace

int main() {
  const auto suite_start = Clock::now();
  const int threads = [] {
    const char* e = std::getenv("RETAG_THREADS");
    return e ? std::max(1, std::atoi(e)) : 1;
  }();

  report(1, "gradient suite", [] {
    const auto t0 = Clock::now();
    const auto results = verification_suite();
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    double worst = 0;
    std::string failed;
    for (const auto& r : results) {
      // the negative control is expected to show a large error
      if (!r.name.starts_with("negative control")) worst = std::max(worst, r.max_rel_err);
      if (!r.passed) failed += " " + r.name;
    }
    const bool ok = failed.empty() && secs < 120;
    return Outcome{ok, fmt("%.0f checks, max rel err %.2e (excluding the negative control), %.1f s (limit 120 s)", static_cast<double>(results.size()),
                           worst, secs) +
                           (failed.empty() ? "" : "; failed:" + failed)};
  });

  report(2, "quantization oracle", [] {
    Rng rng(2024, "acceptance-quantize");
    int mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const auto k = static_cast<std::size_t>(rng.uniform_int(2, 16));
      const auto h = static_cast<std::size_t>(rng.uniform_int(1, 8));
      const auto n = static_cast<std::size_t>(rng.uniform_int(1, 8));
      auto codes = verify::random_tensor(rng, {k, h}, -1, 1, false);
      auto enc = verify::random_tensor(rng, {n, h}, -1, 1, false);
      const auto q = quantize(codes, enc);
      const std::vector<double> cv(codes.data().begin(), codes.data().end());
      for (std::size_t i = 0; i < n; ++i)
        mismatches += q.indices[i] != oracle::nearest_code(cv, k, h, enc.data().data() + i * h);
    }
    return Outcome{mismatches == 0, fmt("1000 random cases (K<=16, H<=8), %.0f index mismatches", mismatches)};
  });

  report(3, "straight-through + residual", [] {
    using TD = Tensor<double>;
    double jac[2][2];
    for (std::size_t out = 0; out < 2; ++out) {
      TD e({1, 2}, {0.3, -0.8}, true);
      TD codes({3, 2}, {1, 1, -1, 0.5, 0, 2}, true);
      auto q = quantize(codes, e).quantized;
      auto u = fuse(e, straight_through(e, q));
      backward(sum(slice(u, 1, out, 1)));
      const auto g = e.grad_or_zeros();
      jac[out][0] = g[0];
      jac[out][1] = g[1];
      for (double c : codes.grad_or_zeros())
        if (c != 0) return Outcome{false, "gradient reached the codes through the straight-through path"};
    }
    const bool ok = jac[0][0] == 2 && jac[0][1] == 0 && jac[1][0] == 0 && jac[1][1] == 2;
    return Outcome{ok, fmt("du/de = [[%g, %g], [%g, %g]], code grads exactly 0", jac[0][0], jac[0][1], jac[1][0], jac[1][1])};
  });

  report(4, "loss routing", [] {
    using Params = ModelParams<double>;
    auto spec = GeneratorSpec::defaults();
    spec.seed = 4;
    const auto data = synth_generate(spec, 16);
    const auto vocab = corpus_vocab({&data});
    ModelConfig mc;
    mc.layers = 1;
    mc.heads = 2;
    mc.hidden = 16;
    mc.ffn = 32;
    mc.codebook_size = 8;
    mc.max_len = 192;
    mc.vocab_size = static_cast<int>(vocab.size());
    const auto encoded = encode_corpus(vocab, data, Strategy::ReTAG);
    auto mass = [](const Params& p, const char* prefix) {
      double m = 0;
      for (const auto& [name, t] : p.tensors)
        if (name.starts_with(prefix))
          for (double g : t.grad_or_zeros()) m += std::abs(g);
      return m;
    };
    auto p = Params::init(mc, 4);
    double term3_enc = 0, term4_codes = 0;
    for (const auto& ex : encoded) {
      auto f = forward_train(p, ex, Strategy::ReTAG, 0.25);
      backward(f.codebook_loss);
      term3_enc += mass(p, "enc.") + mass(p, "embed.");
      p.zero_grad();
      f = forward_train(p, ex, Strategy::ReTAG, 0.25);
      backward(f.commitment_loss);
      term4_codes += mass(p, "codebook.");
      p.zero_grad();
    }
    double stage1_dec = 0, pre_ci = 0;
    TrainConfig tc;
    tc.stage1_steps = 5;
    tc.stage2_steps = 5;
    tc.batch_size = 4;
    const auto ci_w = p.at("ci.w").clone(), ci_b = p.at("ci.b").clone();
    pretrain(p, encoded, tc, [&](const TrainRecord& r, const Params& m) {
      if (r.stage == "stage1") stage1_dec += mass(m, "dec.");
      pre_ci += mass(m, "ci.");
    });
    const bool ci_same = std::ranges::equal(p.at("ci.w").data(), ci_w.data()) &&
                         std::ranges::equal(p.at("ci.b").data(), ci_b.data());
    const bool ok = term3_enc == 0 && term4_codes == 0 && stage1_dec == 0 && pre_ci == 0 && ci_same;
    return Outcome{ok, fmt("|d term3/d enc| = %g, |d term4/d codes| = %g, |stage-1 decoder grad| = %g, CI grad = %g",
                           term3_enc, term4_codes, stage1_dec, pre_ci) +
                           (ci_same ? ", CI head unchanged" : ", CI head CHANGED")};
  });

  // Desk-scale training runs shared by criteria 5-8, 10 and 12.
  std::cout << "training desk-scale variants (" << kSeeds.size() << " seeds each)...\n" << std::flush;
  const Desk desk = make_desk();
  RunOptions base_opts;
  base_opts.random_tags = true;
  base_opts.threads = threads;
  base_opts.eval_seed = 99;
  base_opts.keep_model = true;

  std::vector<RunResult> base_runs;
  double base_seconds = 0;
  report(5, "random-tag controllability", [&] {
    const auto t0 = Clock::now();
    std::vector<double> gold, random;
    std::string per_seed;
    for (auto seed : kSeeds) {
      base_runs.push_back(run_variant(desk.config, parse_variant("retag6"), desk.vocab, desk.data, seed, base_opts));
      const auto& r = base_runs.back();
      gold.push_back(r.gold.groups.overall.bleu1);
      random.push_back(r.random_tags->groups.overall.bleu1);
      per_seed += fmt(" [seed %.0f: %.2f vs %.2f]", static_cast<double>(seed), gold.back(), random.back());
    }
    base_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    const double drop = mean(gold) - mean(random);
    const bool ok = drop >= 2.0 && base_seconds < 15 * 60;
    return Outcome{ok, fmt("gold-tag BLEU-1 %.2f vs random-tag %.2f (drop %.2f, need >= 2.0), %.0f s (limit 900 s);",
                           mean(gold), mean(random), drop, base_seconds) +
                           per_seed};
  });

  auto sweep = [&](Variant v) {
    std::vector<RunResult> runs;
    RunOptions ro;
    ro.threads = threads;
    for (auto seed : kSeeds) runs.push_back(run_variant(desk.config, v, desk.vocab, desk.data, seed, ro));
    return runs;
  };
  auto overall_bleu1 = [](const std::vector<RunResult>& runs) {
    std::vector<double> xs;
    for (const auto& r : runs) xs.push_back(r.gold.groups.overall.bleu1);
    return mean(xs);
  };
  auto multi_bleu1 = [](const std::vector<RunResult>& runs) {
    std::vector<double> xs;
    for (const auto& r : runs) xs.push_back(multi_category_bleu1(r.gold).value_or(0.0));
    return mean(xs);
  };

  report(6, "codebook count and CI loss", [&] {
    if (base_runs.size() != kSeeds.size()) return Outcome{false, "base runs missing"};
    const auto two = sweep(parse_variant("retag2"));
    auto no_ci_variant = parse_variant("retag6");
    no_ci_variant.ci = false;
    const auto no_ci = sweep(no_ci_variant);
    const auto books = directional("6 vs 2 codebooks, multi-category BLEU-1", multi_bleu1(base_runs), multi_bleu1(two));
    const auto ci = directional("CI on vs off, overall BLEU-1", overall_bleu1(base_runs), overall_bleu1(no_ci));
    return Outcome{books.pass && ci.pass, books.detail + "; " + ci.detail};
  });

  report(7, "pretraining", [&] {
    if (base_runs.size() != kSeeds.size()) return Outcome{false, "base runs missing"};
    auto v = parse_variant("retag6");
    v.pretrain = false;
    const auto scratch = sweep(v);
    return directional("pretrain->finetune vs finetune-only, overall BLEU-1", overall_bleu1(base_runs),
                       overall_bleu1(scratch));
  });

  report(8, "CI classifier accuracy", [&] {
    if (base_runs.size() != kSeeds.size()) return Outcome{false, "base runs missing"};
    std::vector<double> acc;
    for (const auto& r : base_runs) acc.push_back(r.gold.ci_accuracy.value_or(0.0));
    double worst = 1;
    for (double a : acc) worst = std::min(worst, a);
    return Outcome{mean(acc) >= 0.9, fmt("held-out accuracy mean %.3f, worst seed %.3f (need >= 0.90)", mean(acc), worst)};
  });

  report(9, "metric oracles", [] {
    const double b = bleu({"a b c d"}, {"a b c d e"}, 1);
    const double r = rouge_l("a b c", "a x c");
    const double p = parent("a b", "a b", {"a", "z"}, 0.1);
    const double p_ref = 2 * std::pow(0.5, 0.1) / (1 + std::pow(0.5, 0.1));
    const double ident = bleu({"the club scored 3 goals in june"}, {"the club scored 3 goals in june"}, 4);
    const double lambda0 = std::abs(parent("a b", "a b", {"a", "z"}, 0.0) - 1.0);
    const bool ok = std::abs(b - 100 * std::exp(-0.25)) < 1e-9 && std::abs(r - 2.0 / 3.0) < 1e-9 &&
                    std::abs(p - p_ref) < 1e-9 && std::abs(p - 0.9653) < 1e-4 && ident == 100.0 && lambda0 < 1e-12;
    return Outcome{ok, fmt("BLEU-1 %.3f, ROUGE-L %.6f, PARENT %.4f, identical BLEU-4 %.1f", b, r, p, ident)};
  });

  report(10, "beam dominance", [&] {
    if (base_runs.empty() || !base_runs[0].model) return Outcome{false, "trained model missing"};
    const auto& model = *base_runs[0].model;
    std::vector<int> worse(desk.data.test.size(), 0);
    parallel_for(desk.data.test.size(), threads, [&](std::size_t i) {
      const auto& inst = desk.data.test[i];
      const auto ex = encode_example(desk.vocab, inst, Strategy::ReTAG);
      const auto ids = std::span<const int>(ex.input_ids);
      const auto greedy = generate(model, ids, Strategy::ReTAG, inst.categories, 1, desk.config.eval.max_len);
      const auto wide = generate(model, ids, Strategy::ReTAG, inst.categories, 10, desk.config.eval.max_len);
      worse[i] = wide.log_prob < greedy.log_prob;
    });
    int bad = 0;
    for (int w : worse) bad += w;
    const double n = static_cast<double>(desk.data.test.size());
    return Outcome{bad == 0, fmt("beam-10 >= greedy log-prob on %.0f/%.0f test instances", n - bad, n)};
  });

  report(11, "filtering heuristic thresholds", [] {
    struct Case {
      int ratio;
      bool superlative;
      HeuristicStyle style;
      HeuristicLabel want;
    };
    using L = HeuristicLabel;
    using S = HeuristicStyle;
    const Case cases[] = {{74, false, S::InfoTabs, L::AnalyticalCandidate}, {75, false, S::InfoTabs, L::Unlabeled},
                          {78, false, S::InfoTabs, L::Unlabeled},           {80, false, S::InfoTabs, L::Unlabeled},
                          {81, false, S::InfoTabs, L::DescriptiveCandidate}, {79, false, S::ToTTo, L::AnalyticalCandidate},
                          {79, true, S::ToTTo, L::AnalyticalCandidate},      {80, false, S::ToTTo, L::DescriptiveCandidate},
                          {80, true, S::ToTTo, L::AnalyticalCandidate},      {84, false, S::ToTTo, L::DescriptiveCandidate},
                          {84, true, S::ToTTo, L::AnalyticalCandidate},      {85, false, S::ToTTo, L::DescriptiveCandidate},
                          {85, true, S::ToTTo, L::DescriptiveCandidate}};
    std::string wrong;
    for (const auto& c : cases) {
      auto [ref, tab] = fixture::ratio_pair(c.ratio, c.superlative);
      const auto v = classify_heuristic(ref, tab, c.style);
      if (v.ratio != c.ratio || v.label != c.want)
        wrong += fmt(" ratio %.0f%s", c.ratio, 0) + (c.superlative ? "+sup" : "") + "->" + std::string(label_name(v.label));
    }
    return Outcome{wrong.empty(), fmt("%.0f threshold cases checked", static_cast<double>(std::size(cases))) +
                                      (wrong.empty() ? "" : "; mismatched:" + wrong)};
  });

  report(12, "checkpoint roundtrip", [&] {
    if (base_runs.empty() || !base_runs[0].model) return Outcome{false, "trained model missing"};
    const auto& model = *base_runs[0].model;
    const auto bytes = serialize_checkpoint(model, desk.vocab, train_digest(to_json(desk.config.train)));
    const auto back = parse_checkpoint<float>(bytes);
    std::size_t differing = 0;
    for (const auto& [name, t] : model.tensors) {
      const auto& u = back.params.at(name);
      if (u.shape() != t.shape() || std::memcmp(u.data().data(), t.data().data(), t.numel() * sizeof(float)) != 0)
        ++differing;
    }
    int rejected = 0;
    std::optional<Checkpoint<float>> partial;
    auto flipped = bytes;
    flipped[0] ^= 0x20;
    try {
      partial = parse_checkpoint<float>(flipped);
    } catch (const FormatError&) {
      ++rejected;
    }
    try {
      partial = parse_checkpoint<float>(bytes.substr(0, bytes.size() - 7));
    } catch (const CorruptionError&) {
      ++rejected;
    }
    const bool ok = differing == 0 && back.params.tensors.size() == model.tensors.size() && rejected == 2 && !partial;
    return Outcome{ok, fmt("%.0f tensors, %.0f differ bitwise; %.0f/2 corrupted images rejected with nothing loaded",
                           static_cast<double>(model.tensors.size()), static_cast<double>(differing), rejected)};
  });

  const double total = std::chrono::duration<double>(Clock::now() - suite_start).count();
  std::printf("%d of 12 criteria failed; total %.0f s\n", failures, total);
  return failures == 0 ? 0 : 1;
}
