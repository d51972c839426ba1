#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "retag/cli/verification.hpp"
#include "retag/corpus/generator.hpp"
#include "retag/corpus/heuristic.hpp"
#include "retag/corpus/split.hpp"
#include "retag/io/checkpoint.hpp"
#include "retag/io/run_config.hpp"
#include "retag/trainer/experiment.hpp"

namespace retag {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

namespace cli {

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// "numerical,temporal" -> set; unknown names and invalid combinations are
/// usage errors.
inline CategorySet parse_tags(const std::string& list) {
  CategorySet s;
  for (const auto& name : split_list(list)) {
    auto c = parse_category(name);
    if (!c) throw ConfigError("unknown tag '" + name + "'");
    s.insert(*c);
  }
  if (s.empty()) throw ConfigError("no tags given");
  if (!s.valid()) throw ConfigError("tag 'descriptive' cannot be combined with other tags");
  return s;
}

inline int threads_from_env() {
  if (const char* v = std::getenv("RETAG_THREADS")) {
    try {
      return std::max(1, std::stoi(v));
    } catch (const std::exception&) {
      throw ConfigError(std::string("RETAG_THREADS must be an integer, got '") + v + "'");
    }
  }
  return 1;
}

inline RunConfig load_config_or_default(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

inline void write_train_report(const std::string& path, const TrainReport& rep) {
  if (path.empty()) return;
  std::vector<nlohmann::json> lines;
  for (const auto& r : rep.records) lines.push_back(to_json(r));
  write_jsonl(path, lines);
  write_json(path + ".summary.json", summary_json(rep));
}

/// Title, section, and each highlighted cell with its header.
inline std::string highlighted_text(const Instance& inst) {
  std::string s = inst.table.title + " " + inst.table.section_title;
  for (const auto& h : inst.highlights) s += " " + inst.table.headers.at(h.col) + " " + inst.table.rows.at(h.row).at(h.col);
  return s;
}

}  // namespace cli

/// Entry point of the `retag` tool. Returns the process exit code.
inline int cli_main(int argc, char** argv) {
  using namespace cli;
  CLI::App app{"retag: reasoning-tagged table-to-text generation with category codebooks"};
  app.require_subcommand(1);

  // data
  auto* data = app.add_subcommand("data", "synthesize, filter or split corpora");
  data->require_subcommand(1);
  std::string synth_config, synth_out;
  std::size_t synth_n = 0;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = data->add_subcommand("synth", "generate a synthetic reasoning-tagged corpus");
  synth->add_option("--config", synth_config, "run config (generator section)");
  synth->add_option("--n", synth_n, "number of instances")->required();
  synth->add_option("--seed", synth_seed, "generator seed (overrides the config)");
  synth->add_option("--out", synth_out, "output JSONL")->required();

  std::string filter_style, filter_in, filter_out;
  auto* filter = data->add_subcommand("filter", "label references with the fuzzy-match heuristic");
  filter->add_option("--style", filter_style, "totto or infotabs")->required();
  filter->add_option("--in", filter_in, "instances JSONL")->required();
  filter->add_option("--out", filter_out, "verdicts JSONL")->required();

  std::string split_in, split_fracs = "0.8,0.1,0.1", split_dir = ".";
  std::uint64_t split_seed = 0;
  auto* split = data->add_subcommand("split", "seeded train/valid/test split");
  split->add_option("--in", split_in, "instances JSONL")->required();
  split->add_option("--fractions", split_fracs, "train,valid,test fractions");
  split->add_option("--seed", split_seed, "shuffle seed");
  split->add_option("--out-dir", split_dir, "directory for train/valid/test.jsonl");

  // pretrain / train
  std::string cfg_path, data_path, out_path, init_path, report_path;
  std::optional<std::uint64_t> train_seed;
  auto* pre = app.add_subcommand("pretrain", "two-stage codebook pretraining");
  auto* train = app.add_subcommand("train", "fine-tune on analytical and descriptive references");
  for (auto* sc : {pre, train}) {
    sc->add_option("--config", cfg_path, "run config JSON");
    sc->add_option("--data", data_path, "training instances JSONL")->required();
    sc->add_option("--out", out_path, "checkpoint to write")->required();
    sc->add_option("--report", report_path, "per-step training log (JSONL)");
    sc->add_option("--seed", train_seed, "training seed (overrides the config)");
  }
  train->add_option("--init", init_path, "checkpoint to start from");

  // generate
  std::string ckpt_path, input_path, strategy_flag, tags_flag, gen_out;
  std::optional<int> beam_flag, max_len_flag;
  auto* gen = app.add_subcommand("generate", "generate sentences, optionally forcing reasoning tags");
  gen->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  gen->add_option("--input", input_path, "instances JSONL")->required();
  gen->add_option("--strategy", strategy_flag, "notags, tags or retag (default: the checkpoint's)");
  gen->add_option("--tags", tags_flag, "comma-separated categories for every instance");
  gen->add_option("--beam", beam_flag, "beam width");
  gen->add_option("--max-len", max_len_flag, "maximum generated tokens");
  gen->add_option("--out", gen_out, "output JSONL")->required();

  // eval
  std::string eval_data, eval_report;
  bool random_tags = false;
  std::uint64_t eval_seed = 0;
  auto* ev = app.add_subcommand("eval", "generate and score a dataset");
  ev->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  ev->add_option("--data", eval_data, "instances JSONL")->required();
  ev->add_option("--strategy", strategy_flag, "notags, tags or retag (default: the checkpoint's)");
  ev->add_flag("--random-tags", random_tags, "replace analytical tags with uniformly random ones");
  ev->add_option("--seed", eval_seed, "seed for random tags");
  ev->add_option("--config", cfg_path, "run config (metric and eval sections)");
  ev->add_option("--beam", beam_flag, "beam width");
  ev->add_option("--max-len", max_len_flag, "maximum generated tokens");
  ev->add_option("--report", eval_report, "report JSON")->required();

  // ablate
  std::string variants_flag = "notags,tags,retag2,retag6", ci_flag = "on", pretrain_flag = "on", seeds_flag = "0";
  std::string ablate_data, ablate_pretrain, ablate_report;
  auto* ab = app.add_subcommand("ablate", "train and evaluate a grid of variants");
  ab->add_option("--config", cfg_path, "run config JSON");
  ab->add_option("--variants", variants_flag, "subset of notags,tags,retag2,retag6");
  ab->add_option("--ci", ci_flag, "on, off or on,off");
  ab->add_option("--pretrain", pretrain_flag, "on, off or on,off");
  ab->add_option("--seeds", seeds_flag, "comma-separated seeds");
  ab->add_option("--data", ablate_data, "instances JSONL with train/test splits")->required();
  ab->add_option("--pretrain-data", ablate_pretrain, "pretraining corpus (default: analytical train instances)");
  ab->add_option("--report", ablate_report, "report JSON")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of every op and a tiny model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      auto rc = load_config_or_default(synth_config);
      if (synth_seed) rc.generator.seed = *synth_seed;
      if (synth_n == 0) throw ConfigError("--n must be positive");
      write_instances_jsonl(synth_out, synth_generate(rc.generator, synth_n));
      std::cout << "wrote " << synth_n << " instances to " << synth_out << "\n";
    } else if (filter->parsed()) {
      const auto style = parse_heuristic_style(filter_style);
      std::vector<nlohmann::json> lines;
      for (const auto& inst : read_instances_jsonl(filter_in)) {
        auto j = to_json(classify_heuristic(inst.reference, highlighted_text(inst), style));
        j["id"] = inst.table.id;
        lines.push_back(std::move(j));
      }
      write_jsonl(filter_out, lines);
      std::cout << "wrote " << lines.size() << " verdicts to " << filter_out << "\n";
    } else if (split->parsed()) {
      const auto parts = split_list(split_fracs);
      if (parts.size() != 3) throw ConfigError("--fractions needs three comma-separated values");
      std::array<double, 3> f{};
      try {
        for (std::size_t i = 0; i < 3; ++i) f[i] = std::stod(parts[i]);
      } catch (const std::exception&) {
        throw ConfigError("--fractions: not a number in '" + split_fracs + "'");
      }
      auto res = split_instances(read_instances_jsonl(split_in), f, split_seed);
      std::filesystem::create_directories(split_dir);
      write_instances_jsonl(split_dir + "/train.jsonl", res.train);
      write_instances_jsonl(split_dir + "/valid.jsonl", res.valid);
      write_instances_jsonl(split_dir + "/test.jsonl", res.test);
      std::cout << "train " << res.train.size() << " valid " << res.valid.size() << " test " << res.test.size() << "\n";
    } else if (pre->parsed() || train->parsed()) {
      auto rc = load_config_or_default(cfg_path);
      if (train_seed) rc.train.seed = *train_seed;
      const auto instances = read_instances_jsonl(data_path);
      if (instances.empty()) throw DataError("no instances in '" + data_path + "'");
      ModelParams<float> p;
      Vocab vocab;
      if (!init_path.empty()) {
        auto ck = load_checkpoint<float>(init_path);
        p = std::move(ck.params);
        vocab = std::move(ck.vocab);
      } else {
        vocab = corpus_vocab({&instances});
        rc.model.vocab_size = static_cast<int>(vocab.size());
        rc.model.validate();
        p = ModelParams<float>::init(rc.model, rc.train.seed);
      }
      const auto examples = encode_corpus(vocab, instances, p.config.strategy);
      auto rep = pre->parsed() ? pretrain(p, examples, rc.train) : finetune(p, examples, rc.train);
      save_checkpoint(p, vocab, out_path, train_digest(to_json(rc.train)));
      rep.checkpoint = out_path;
      write_train_report(report_path, rep);
      std::cout << (pre->parsed() ? "pretrained " : "trained ") << rep.records.size() << " steps; final loss "
                << (rep.records.empty() ? 0.0 : rep.records.back().loss.total) << "; wrote " << out_path << "\n";
    } else if (gen->parsed()) {
      const auto ck = load_checkpoint<float>(ckpt_path);
      const Strategy strategy = strategy_flag.empty() ? ck.params.config.strategy : parse_strategy(strategy_flag);
      const std::optional<CategorySet> forced = tags_flag.empty() ? std::nullopt : std::optional(parse_tags(tags_flag));
      const int beam = beam_flag.value_or(DecodeConfig{}.beam);
      const int max_len = max_len_flag.value_or(DecodeConfig{}.max_len);
      const auto instances = read_instances_jsonl(input_path);
      std::vector<nlohmann::json> lines(instances.size());
      parallel_for(instances.size(), threads_from_env(), [&](std::size_t i) {
        const auto& inst = instances[i];
        const auto g = generate_for(ck.params, ck.vocab, inst, strategy, forced.value_or(inst.categories), beam, max_len);
        std::vector<std::string> tags;
        for (auto c : g.tags.members()) tags.emplace_back(category_name(c));
        lines[i] = {{"id", inst.table.id}, {"question", g.question}, {"prediction", g.text},
                    {"log_prob", g.log_prob}, {"tags", tags}};
      });
      write_jsonl(gen_out, lines);
      std::cout << "wrote " << lines.size() << " generations to " << gen_out << "\n";
    } else if (ev->parsed()) {
      const auto rc = load_config_or_default(cfg_path);
      const auto ck = load_checkpoint<float>(ckpt_path);
      EvalOptions eo;
      eo.strategy = strategy_flag.empty() ? ck.params.config.strategy : parse_strategy(strategy_flag);
      eo.beam = beam_flag.value_or(rc.eval.beam);
      eo.max_len = max_len_flag.value_or(rc.eval.max_len);
      eo.random_tags = random_tags;
      eo.seed = eval_seed;
      eo.metric = rc.metric;
      eo.threads = threads_from_env();
      const auto rep = evaluate(ck.params, ck.vocab, read_instances_jsonl(eval_data), eo);
      write_json(eval_report, to_json(rep));
      const auto& o = rep.groups.overall;
      std::cout << "n " << o.n << " bleu1 " << o.bleu1 << " bleu4 " << o.bleu4 << " rougeL " << o.rougeL << " parent "
                << o.parent << "\n";
    } else if (ab->parsed()) {
      const auto rc = load_config_or_default(cfg_path);
      const auto all = read_instances_jsonl(ablate_data);
      ExperimentData d;
      for (const auto& inst : all) {
        if (inst.split == Split::Train) d.train.push_back(inst);
        else if (inst.split == Split::Test) d.test.push_back(inst);
      }
      if (d.train.empty() || d.test.empty()) throw DataError("ablate: --data needs both train and test instances");
      if (!ablate_pretrain.empty()) {
        d.pretrain = read_instances_jsonl(ablate_pretrain);
      } else {
        for (const auto& inst : d.train)
          if (inst.analytical()) d.pretrain.push_back(inst);
      }
      const auto vocab = corpus_vocab({&d.pretrain, &d.train});
      auto on_off = [](const std::string& flag, const char* what) {
        std::vector<bool> out;
        for (const auto& v : split_list(flag)) {
          if (v == "on") out.push_back(true);
          else if (v == "off") out.push_back(false);
          else throw ConfigError(std::string("--") + what + ": expected on/off, got '" + v + "'");
        }
        if (out.empty()) throw ConfigError(std::string("--") + what + " is empty");
        return out;
      };
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split_list(seeds_flag)) {
        try {
          seeds.push_back(std::stoull(s));
        } catch (const std::exception&) {
          throw ConfigError("--seeds: not an integer: '" + s + "'");
        }
      }
      std::vector<Variant> grid;
      for (const auto& name : split_list(variants_flag)) {
        const auto base = parse_variant(name);
        for (bool pt : on_off(pretrain_flag, "pretrain")) {
          if (base.strategy != Strategy::ReTAG) {
            // The CI term only exists with codebooks.
            auto v = base;
            v.ci = false;
            v.pretrain = pt;
            grid.push_back(v);
            continue;
          }
          for (bool ci : on_off(ci_flag, "ci")) {
            auto v = base;
            v.ci = ci;
            v.pretrain = pt;
            grid.push_back(v);
          }
        }
      }
      RunOptions ro;
      ro.threads = threads_from_env();
      nlohmann::json runs = nlohmann::json::array(), summary = nlohmann::json::array();
      for (const auto& v : grid) {
        double b1 = 0, multi = 0;
        int multi_n = 0;
        for (auto seed : seeds) {
          auto r = run_variant(rc, v, vocab, d, seed, ro);
          b1 += r.gold.groups.overall.bleu1;
          if (auto m = multi_category_bleu1(r.gold)) {
            multi += *m;
            ++multi_n;
          }
          runs.push_back(to_json(r));
          std::cout << v.label() << " seed " << seed << " bleu1 " << r.gold.groups.overall.bleu1 << "\n";
        }
        summary.push_back({{"label", v.label()},
                           {"mean_bleu1", b1 / static_cast<double>(seeds.size())},
                           {"mean_multi_category_bleu1", multi_n ? nlohmann::json(multi / multi_n) : nlohmann::json(nullptr)}});
      }
      write_json(ablate_report, {{"runs", runs}, {"summary", summary}, {"config", to_json(rc)}});
    } else if (gc->parsed()) {
      bool ok = true;
      for (const auto& r : verification_suite()) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  max rel err " << r.max_rel_err << " (tol " << r.tolerance
                  << ")" << (r.detail.empty() ? "" : "  " + r.detail) << "\n";
        ok = ok && r.passed;
      }
      return ok ? kExitOk : kExitNumeric;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace retag
