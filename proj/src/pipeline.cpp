#include "dark/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "dark/denoiser_net.hpp"
#include "dark/eval_harness.hpp"
#include "dark/kg_store.hpp"
#include "dark/pair_sampler.hpp"
#include "dark/reflective_sampler.hpp"
#include "dark/rl_explorer.hpp"

#ifndef DARK_VERSION
#define DARK_VERSION "0.1.0"
#endif

namespace dark {

namespace fs = std::filesystem;
using nlohmann::json;

std::string version_string() { return DARK_VERSION; }

const std::vector<std::string>& pipeline_commands() {
  static const std::vector<std::string> cmds{"ingest", "sample-queries", "train", "train-rl",
                                             "abduce", "deduce",         "eval",  "report"};
  return cmds;
}

namespace {

json common_defaults() { return {{"out", "."}, {"threads", 0}, {"verbose", false}}; }

json schedule_defaults() { return {{"weight_mode", "elbo"}, {"t_min", 1e-3}}; }

json sampler_defaults() {
  return {{"steps", 64}, {"reflect_every", 8}, {"candidates", 4}, {"temperature", 1.0}, {"verify", "model"}};
}

void merge_into(json& dst, const json& src) {
  for (const auto& [k, v] : src.items()) dst[k] = v;
}

}  // namespace

json default_config(std::string_view command) {
  json c = common_defaults();
  if (command == "ingest") {
    merge_into(c, {{"triples", ""},
                   {"synthetic", false},
                   {"entities", 200},
                   {"relations", 4},
                   {"edges", 1500},
                   {"block_size", 5},
                   {"noise", 0.05},
                   {"split", "0.8:0.1:0.1"},
                   {"seed", 0}});
  } else if (command == "sample-queries") {
    merge_into(c, {{"data", ""},
                   {"patterns", "all"},
                   {"train_per_pattern", 100},
                   {"valid_per_pattern", 10},
                   {"test_per_pattern", 10},
                   {"max_answers", 32},
                   {"max_attempts", 500},
                   {"query_len", 15},
                   {"obs_len", 33},
                   {"seed", 0}});
  } else if (command == "train") {
    merge_into(c, {{"data", ""},
                   {"pairs", ""},
                   {"valid_pairs", ""},
                   {"init", ""},
                   {"epochs", 20},
                   {"batch_size", 32},
                   {"lr", 1e-4},
                   {"warmup", 0},
                   {"weight_decay", 1e-6},
                   {"clip_norm", 1.0},
                   {"beta1", 0.9},
                   {"beta2", 0.999},
                   {"phase_split_epoch", -1},
                   {"layers", 4},
                   {"dim", 128},
                   {"heads", 4},
                   {"ffn_dim", 512},
                   {"init_std", 0.02},
                   {"query_len", 15},
                   {"obs_len", 33},
                   {"seed", nullptr}});
    merge_into(c, schedule_defaults());
  } else if (command == "train-rl") {
    merge_into(c, {{"checkpoint", ""},
                   {"reference", ""},
                   {"data", ""},
                   {"pairs", ""},
                   {"variant", ""},
                   {"group_size", 8},
                   {"lambda", 2},
                   {"beta", 0.01},
                   {"clip", 0.2},
                   {"mask_frac", "0.3:0.7"},
                   {"task_mix", 0.5},
                   {"tasks", "both"},
                   {"epochs", 10},
                   {"steps_per_epoch", 20},
                   {"rollout_steps", 16},
                   {"lr", 1e-5},
                   {"reward_graph", "train"},
                   {"eval_rollouts", 64},
                   {"seed", nullptr}});
  } else if (command == "abduce") {
    merge_into(c, {{"checkpoint", ""}, {"data", ""}, {"observation", ""}, {"seed", 0}});
    merge_into(c, sampler_defaults());
  } else if (command == "deduce") {
    merge_into(c, {{"checkpoint", ""},
                   {"data", ""},
                   {"pattern", "1p"},
                   {"anchors", ""},
                   {"relations", ""},
                   {"seed", 0}});
    merge_into(c, sampler_defaults());
  } else if (command == "eval") {
    merge_into(c, {{"checkpoint", ""},
                   {"data", ""},
                   {"pairs", ""},
                   {"mode", "abduce"},
                   {"patterns", "all"},
                   {"limit", 0},
                   {"baseline", true},
                   {"seed", nullptr}});
    merge_into(c, sampler_defaults());
  } else if (command == "report") {
    merge_into(c, {{"inputs", ""}});
  } else {
    throw Error(ErrorCode::invalid_argument, "unknown command '" + std::string(command) + "'");
  }
  return c;
}

json effective_config(std::string_view command, const json& overrides) {
  json c = default_config(command);
  if (overrides.is_null()) return c;
  if (!overrides.is_object()) throw Error(ErrorCode::invalid_argument, "config must be a JSON object");
  for (const auto& [k, v] : overrides.items()) {
    if (!c.contains(k)) {
      throw Error(ErrorCode::invalid_argument, "unknown config key '" + k + "' for " + std::string(command));
    }
    c[k] = v;
  }
  return c;
}

namespace {

// ---- config access ----

std::string str(const json& c, const char* key) { return c.at(key).get<std::string>(); }

std::size_t uint(const json& c, const char* key) {
  const auto& v = c.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw Error(ErrorCode::invalid_argument, std::string(key) + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double num(const json& c, const char* key) {
  const auto& v = c.at(key);
  if (!v.is_number()) throw Error(ErrorCode::invalid_argument, std::string(key) + " must be a number");
  return v.get<double>();
}

std::uint64_t seed_of(const json& c) {
  const auto& v = c.at("seed");
  if (v.is_null()) throw Error(ErrorCode::invalid_argument, "a --seed is required for this command");
  if (!v.is_number_integer()) throw Error(ErrorCode::invalid_argument, "seed must be an integer");
  return v.get<std::uint64_t>();
}

// Accepts a JSON array or a comma separated string.
std::vector<std::string> list_of(const json& v) {
  std::vector<std::string> out;
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(e.get<std::string>());
    return out;
  }
  std::stringstream ss(v.get<std::string>());
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> colon_numbers(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::invalid_argument, "bad number '" + item + "' in '" + s + "'");
    }
  }
  return out;
}

std::vector<Pattern> patterns_of(const json& v) {
  if (v.is_string() && v.get<std::string>() == "all") return {kAllPatterns.begin(), kAllPatterns.end()};
  std::vector<Pattern> out;
  for (const auto& s : list_of(v)) out.push_back(parse_pattern(s));
  return out;
}

std::size_t threads_of(const json& c) {
  std::size_t t = uint(c, "threads");
  if (t == 0) {
    if (const char* env = std::getenv("DARK_THREADS")) {
      try {
        t = static_cast<std::size_t>(std::stoul(env));
      } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_argument, "DARK_THREADS must be a positive integer");
      }
    }
  }
  return std::max<std::size_t>(1, t);
}

NoiseSchedule schedule_of(const json& c) {
  NoiseSchedule s;
  s.weight_mode = parse_weight_mode(str(c, "weight_mode"));
  s.t_min = num(c, "t_min");
  if (!(s.t_min > 0.0 && s.t_min < 1.0)) throw Error(ErrorCode::invalid_argument, "t_min must lie in (0, 1)");
  return s;
}

// ---- shared plumbing ----

struct Run {
  json config;
  fs::path out;
  bool verbose = false;
  json metrics = json::object();
  std::vector<fs::path> artifacts;

  void log(const std::string& line) const {
    if (verbose) std::cerr << line << std::endl;
  }
  void add(const fs::path& p) { artifacts.push_back(p); }
  void add(const std::vector<fs::path>& ps) { artifacts.insert(artifacts.end(), ps.begin(), ps.end()); }
};

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw Error(ErrorCode::invalid_argument, std::string("missing --") + what);
  if (!fs::exists(p)) throw Error(ErrorCode::io, std::string(what) + " not found: " + p.string());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed: " + p.string());
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::io, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, p.string() + ": " + e.what());
  }
}

fs::path pairs_file(const fs::path& p, Split split) {
  if (fs::is_directory(p)) return p / (std::string(to_string(split)) + ".jsonl");
  return p;
}

// --data if given, otherwise the graph directory recorded next to the pairs.
fs::path graph_dir(const json& c, const fs::path& pairs) {
  const std::string data = str(c, "data");
  if (!data.empty()) return data;
  if (!pairs.empty()) {
    const fs::path manifest = (fs::is_directory(pairs) ? pairs : pairs.parent_path()) / "manifest.json";
    if (fs::exists(manifest)) {
      const json m = read_json(manifest);
      if (m.contains("graph_dir")) return m["graph_dir"].get<std::string>();
    }
  }
  throw Error(ErrorCode::invalid_argument, "missing --data (graph directory)");
}

SplitGraphs load_graphs(const fs::path& dir) {
  require_file(dir, "data");
  return read_split_graphs(dir);
}

std::string render_named(const QueryNode& q, const SplitGraphs& g) {
  switch (q.kind) {
    case QueryNode::Kind::anchor:
      return g.entities.name(q.id);
    case QueryNode::Kind::proj:
      return "P(" + g.relations.name(q.id) + "," + render_named(q.children.at(0), g) + ")";
    case QueryNode::Kind::negate:
      return "N(" + render_named(q.children.at(0), g) + ")";
    case QueryNode::Kind::conj:
    case QueryNode::Kind::disj: {
      std::string s = q.kind == QueryNode::Kind::conj ? "I(" : "U(";
      for (std::size_t i = 0; i < q.children.size(); ++i) {
        if (i) s += ",";
        s += render_named(q.children[i], g);
      }
      return s + ")";
    }
  }
  return "?";
}

json names_of(std::span<const EntityId> ids, const SplitGraphs& g) {
  json out = json::array();
  for (EntityId e : ids) out.push_back(g.entities.name(e));
  return out;
}

const KGraph& graph_by_name(const SplitGraphs& g, const std::string& name) { return g.graph(parse_split(name)); }

struct LoadedModel {
  Checkpoint ckpt;
  SplitGraphs graphs;
  Vocabulary vocab;
};

LoadedModel load_model(const json& c, const fs::path& pairs_hint = {}) {
  const fs::path ck = str(c, "checkpoint");
  require_file(ck, "checkpoint");
  LoadedModel m{load_checkpoint(ck), load_graphs(graph_dir(c, pairs_hint)), {}};
  m.vocab = Vocabulary(m.graphs.num_relations(), m.graphs.num_entities());
  check_compatible(m.ckpt.meta, m.vocab, m.ckpt.meta.layout);
  return m;
}

ReflectiveConfig sampler_config(const json& c, const SplitGraphs& graphs) {
  ReflectiveConfig r;
  r.steps = uint(c, "steps");
  r.reflect_every = uint(c, "reflect_every");
  r.candidates = uint(c, "candidates");
  r.temperature = num(c, "temperature");
  const std::string v = str(c, "verify");
  if (v == "model") {
    r.verify = VerifyMode::model;
  } else if (v.rfind("graph:", 0) == 0) {
    r.verify = VerifyMode::graph;
    r.verify_graph = &graph_by_name(graphs, v.substr(6));
  } else {
    throw Error(ErrorCode::invalid_argument, "verify must be model or graph:<split>, got '" + v + "'");
  }
  r.validate();
  return r;
}

// ---- commands ----

void cmd_ingest(Run& run) {
  const json& c = run.config;
  const std::uint64_t seed = seed_of(c);
  std::vector<NamedTriple> triples;
  const std::string path = str(c, "triples");
  if (c.at("synthetic").get<bool>()) {
    if (!path.empty()) throw Error(ErrorCode::invalid_argument, "give either --triples or --synthetic, not both");
    SyntheticGraphSpec spec;
    spec.num_entities = uint(c, "entities");
    spec.num_relations = uint(c, "relations");
    spec.num_edges = uint(c, "edges");
    spec.block_size = uint(c, "block_size");
    spec.noise_fraction = num(c, "noise");
    triples = synthetic_triples(spec, seed);
    const fs::path raw = run.out / "triples.tsv";
    std::ostringstream text;
    for (const auto& t : triples) text << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
    write_text(raw, text.str());
    run.add(raw);
  } else {
    require_file(path, "triples");
    triples = load_triples(path);
  }
  const auto r = colon_numbers(str(c, "split"));
  if (r.size() != 3) throw Error(ErrorCode::invalid_argument, "split must look like 0.8:0.1:0.1");
  const SplitGraphs g = build_split_graphs(triples, {r[0], r[1], r[2]}, seed);
  run.add(write_split_graphs(g, run.out));

  json m;
  m["seed"] = seed;
  m["num_entities"] = g.num_entities();
  m["num_relations"] = g.num_relations();
  m["edges"] = {{"train", g.train.num_triples()}, {"valid", g.valid.num_triples()}, {"test", g.test.num_triples()}};
  m["fingerprints"] = {{"train", g.train.fingerprint()}, {"valid", g.valid.fingerprint()},
                       {"test", g.test.fingerprint()}};
  const fs::path mp = run.out / "manifest.json";
  write_text(mp, m.dump(2) + "\n");
  run.add(mp);
  run.metrics = m;
  run.log("ingest: " + std::to_string(g.num_entities()) + " entities, " + std::to_string(g.test.num_triples()) +
          " edges");
}

void cmd_sample_queries(Run& run) {
  const json& c = run.config;
  const fs::path data = str(c, "data");
  const SplitGraphs g = load_graphs(data);
  DatasetRequest req;
  req.limits.max_answers = uint(c, "max_answers");
  req.limits.max_attempts = uint(c, "max_attempts");
  const auto patterns = patterns_of(c.at("patterns"));
  const std::pair<Split, const char*> per[] = {
      {Split::train, "train_per_pattern"}, {Split::valid, "valid_per_pattern"}, {Split::test, "test_per_pattern"}};
  for (const auto& [split, key] : per) {
    const std::size_t n = uint(c, key);
    if (n == 0) continue;
    for (Pattern p : patterns) req.counts[split][p] = n;
  }
  CanvasLayout layout{uint(c, "query_len"), uint(c, "obs_len")};
  if (req.limits.max_answers > layout.max_answers()) {
    throw Error(ErrorCode::invalid_argument, "max_answers exceeds the observation region");
  }
  const Dataset ds = build_dataset(g, req, layout, seed_of(c));
  run.add(write_dataset(ds, g, run.out, {{"graph_dir", fs::absolute(data).lexically_normal().string()}}));
  json m;
  for (const auto& [split, s] : ds.summary) {
    m[std::string(to_string(split))] = {{"emitted", s.emitted}, {"unseen_fraction", s.unseen_fraction}};
  }
  run.metrics = m;
  run.log("sample-queries: " + std::to_string(ds.pairs.size()) + " pairs");
}

std::vector<TrainExample> examples_of(std::span<const ReasoningPair> pairs, const Vocabulary& vocab,
                                      const CanvasLayout& layout) {
  std::vector<TrainExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({encode_pair(p.query, p.own_answers(), vocab, layout), MaskRegion::whole});
  return out;
}

void cmd_train(Run& run) {
  const json& c = run.config;
  const std::uint64_t seed = seed_of(c);
  const fs::path pairs_path = pairs_file(str(c, "pairs"), Split::train);
  require_file(pairs_path, "pairs");
  const SplitGraphs g = load_graphs(graph_dir(c, str(c, "pairs")));
  const Vocabulary vocab(g.num_relations(), g.num_entities());
  const CanvasLayout layout{uint(c, "query_len"), uint(c, "obs_len")};
  const NoiseSchedule schedule = schedule_of(c);
  const auto pairs = read_pairs(pairs_path, vocab);
  std::vector<TrainExample> examples = examples_of(pairs, vocab, layout);

  AdamWConfig ac;
  ac.lr = num(c, "lr");
  ac.warmup_steps = uint(c, "warmup");
  ac.weight_decay = num(c, "weight_decay");
  ac.clip_norm = num(c, "clip_norm");
  ac.beta1 = num(c, "beta1");
  ac.beta2 = num(c, "beta2");
  if (!(ac.beta1 >= 0.0 && ac.beta1 < 1.0 && ac.beta2 >= 0.0 && ac.beta2 < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "beta1 and beta2 must lie in [0, 1)");
  }
  if (!(num(c, "init_std") > 0.0)) throw Error(ErrorCode::invalid_argument, "init_std must be positive");

  DenoiserModel model;
  OptimizerState opt;
  const std::string init = str(c, "init");
  if (!init.empty()) {
    require_file(init, "init");
    Checkpoint ck = load_checkpoint(init);
    check_compatible(ck.meta, vocab, layout);
    model = std::move(ck.model);
    opt = ck.optimizer.m.empty() ? make_optimizer(model, ac) : std::move(ck.optimizer);
    opt.config = ac;
  } else {
    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.seq_len = layout.length();
    mc.layers = uint(c, "layers");
    mc.dim = uint(c, "dim");
    mc.heads = uint(c, "heads");
    mc.ffn_dim = uint(c, "ffn_dim");
    mc.init_std = num(c, "init_std");
    model = DenoiserModel(mc, derive_seed(seed, 1));
    opt = make_optimizer(model, ac);
  }

  const std::size_t epochs = uint(c, "epochs");
  const std::size_t batch = std::max<std::size_t>(1, uint(c, "batch_size"));
  const long long split_cfg = c.at("phase_split_epoch").get<long long>();
  const std::size_t phase_split = split_cfg < 0 ? (epochs + 1) / 2 : static_cast<std::size_t>(split_cfg);
  const std::size_t threads = threads_of(c);

  std::vector<TrainExample> valid;
  if (const std::string vp = str(c, "valid_pairs"); !vp.empty()) {
    require_file(pairs_file(vp, Split::valid), "valid_pairs");
    const auto vpairs = read_pairs(pairs_file(vp, Split::valid), vocab);
    valid = examples_of(vpairs, vocab, layout);
  }

  Rng rng(derive_seed(seed, 2));
  std::ostringstream loss_csv;
  loss_csv << "epoch,step,loss,grad_norm\n";
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  double first_loss = 0.0, last_epoch_loss = 0.0;
  json epoch_log = json::array();
  for (std::size_t epoch = 0; epoch < epochs && !examples.empty(); ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      std::vector<TrainExample> items;
      for (std::size_t j = b; j < std::min(order.size(), b + batch); ++j) {
        TrainExample ex = examples[order[j]];
        ex.region = two_phase_region(epoch, phase_split, rng);
        items.push_back(std::move(ex));
      }
      const TrainStats st = train_step(model, opt, items, layout, schedule, rng, threads);
      ++step;
      if (step == 1) first_loss = st.mean_loss;
      epoch_loss += st.mean_loss;
      ++batches;
      loss_csv << epoch + 1 << ',' << step << ',' << st.mean_loss << ',' << st.grad_norm << '\n';
    }
    last_epoch_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(1, batches));
    json e{{"epoch", epoch + 1}, {"loss", last_epoch_loss}};
    std::ostringstream line;
    line << "train: epoch " << epoch + 1 << "/" << epochs << " loss " << last_epoch_loss;
    if (!valid.empty()) {
      const double vl = evaluation_loss(model, valid, layout, schedule, derive_seed(seed, 3));
      e["valid_loss"] = vl;
      line << " valid " << vl;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    line << " (" << secs << " s)";
    run.log(line.str());
    epoch_log.push_back(e);
  }

  const fs::path ck = run.out / "checkpoint.bin";
  save_checkpoint(ck, model, opt, {vocab, layout, schedule});
  run.add(ck);
  const fs::path lp = run.out / "loss.csv";
  write_text(lp, loss_csv.str());
  run.add(lp);
  run.metrics = {{"steps", step},
                 {"parameters", model.net().num_parameters()},
                 {"first_loss", first_loss},
                 {"final_epoch_loss", last_epoch_loss},
                 {"epochs", epoch_log}};
}

RLConfig rl_config(const json& c) {
  RLConfig r;
  r.group_size = uint(c, "group_size");
  r.lambda = uint(c, "lambda");
  r.beta = num(c, "beta");
  r.clip = num(c, "clip");
  const auto mf = colon_numbers(str(c, "mask_frac"));
  if (mf.size() != 2) throw Error(ErrorCode::invalid_argument, "mask_frac must look like lo:hi");
  r.rho_min = mf[0];
  r.rho_max = mf[1];
  r.task_mix = num(c, "task_mix");
  r.tasks = parse_task_set(str(c, "tasks"));
  // Named variants fix the mask mix: task-shaped masks only (A, D, M),
  // random partial masks only (E), or both (RL).
  const std::string v = str(c, "variant");
  if (v == "A") {
    r.task_mix = 1.0, r.tasks = TaskSet::abduction;
  } else if (v == "D") {
    r.task_mix = 1.0, r.tasks = TaskSet::deduction;
  } else if (v == "M") {
    r.task_mix = 1.0, r.tasks = TaskSet::both;
  } else if (v == "E") {
    r.task_mix = 0.0;
  } else if (v == "RL") {
    r.task_mix = 0.5, r.tasks = TaskSet::both;
  } else if (!v.empty()) {
    throw Error(ErrorCode::invalid_argument, "variant must be one of A, D, M, E, RL");
  }
  r.epochs = uint(c, "epochs");
  r.steps_per_epoch = uint(c, "steps_per_epoch");
  r.rollout_steps = uint(c, "rollout_steps");
  r.optimizer.lr = num(c, "lr");
  r.validate();
  return r;
}

void cmd_train_rl(Run& run) {
  const json& c = run.config;
  const std::uint64_t seed = seed_of(c);
  const RLConfig rc = rl_config(c);
  const fs::path pairs_path = pairs_file(str(c, "pairs"), Split::train);
  require_file(pairs_path, "pairs");
  LoadedModel lm = load_model(c, str(c, "pairs"));
  const auto pairs = read_pairs(pairs_path, lm.vocab);
  const KGraph& reward_graph = graph_by_name(lm.graphs, str(c, "reward_graph"));
  const CanvasLayout layout = lm.ckpt.meta.layout;
  const NoiseSchedule schedule = lm.ckpt.meta.schedule;

  DenoiserModel reference = lm.ckpt.model;
  if (const std::string ref = str(c, "reference"); !ref.empty()) {
    require_file(ref, "reference");
    Checkpoint rck = load_checkpoint(ref);
    check_compatible(rck.meta, lm.vocab, layout);
    reference = std::move(rck.model);
  }
  DenoiserModel model = lm.ckpt.model;
  OptimizerState opt = make_optimizer(model, rc.optimizer);

  const std::size_t n_eval = uint(c, "eval_rollouts");
  const std::uint64_t eval_seed = derive_seed(seed, 7);
  const double before =
      mean_rollout_reward(model, pairs, reward_graph, lm.vocab, layout, schedule, rc, n_eval, eval_seed);
  run.log("train-rl: pre-RL mean rollout reward " + std::to_string(before));

  std::ostringstream csv;
  csv << "epoch,mean_reward,distinct_pairs,kl,clip_fraction,zero_std_groups\n";
  json epochs = json::array();
  train_rl(model, opt, reference, pairs, reward_graph, lm.vocab, layout, schedule, rc, derive_seed(seed, 8),
           [&](const RLEpochMetrics& m) {
             csv << m.epoch << ',' << m.mean_reward << ',' << m.distinct_pairs << ',' << m.kl << ','
                 << m.clip_fraction << ',' << m.zero_std_groups << '\n';
             epochs.push_back({{"epoch", m.epoch},
                               {"mean_reward", m.mean_reward},
                               {"distinct_pairs", m.distinct_pairs},
                               {"kl", m.kl},
                               {"clip_fraction", m.clip_fraction}});
             run.log("train-rl: epoch " + std::to_string(m.epoch) + " reward " + std::to_string(m.mean_reward) +
                     " distinct " + std::to_string(m.distinct_pairs));
           });
  const double after =
      mean_rollout_reward(model, pairs, reward_graph, lm.vocab, layout, schedule, rc, n_eval, eval_seed);
  run.log("train-rl: post-RL mean rollout reward " + std::to_string(after));

  const fs::path ck = run.out / "checkpoint.bin";
  save_checkpoint(ck, model, opt, lm.ckpt.meta);
  run.add(ck);
  const fs::path mp = run.out / "rl_metrics.csv";
  write_text(mp, csv.str());
  run.add(mp);
  run.metrics = {{"reward_before", before},
                 {"reward_after", after},
                 {"grpo_steps", rc.epochs * rc.steps_per_epoch},
                 {"epochs", epochs}};
}

void cmd_abduce(Run& run) {
  const json& c = run.config;
  LoadedModel lm = load_model(c);
  const ReflectiveConfig rc = sampler_config(c, lm.graphs);
  std::vector<EntityId> obs;
  for (const auto& name : list_of(c.at("observation"))) obs.push_back(lm.graphs.entities.id_of(name));
  const AnswerSet o = make_answer_set(obs);
  if (o.empty()) throw Error(ErrorCode::invalid_argument, "missing --observation");
  if (o.size() > lm.ckpt.meta.layout.max_answers()) {
    throw Error(ErrorCode::invalid_argument, "observation larger than the observation region");
  }
  const SamplingContext ctx{lm.ckpt.model, lm.vocab, lm.ckpt.meta.layout, lm.ckpt.meta.schedule};
  Rng rng(seed_of(c));
  const AbductionResult res = abduce(ctx, o, rc, rng);
  json out{{"observation", names_of(o, lm.graphs)},
           {"query_tokens", res.query_tokens},
           {"model_evals", res.stats.model_evals},
           {"reflections", res.stats.reflections}};
  if (res.query.ok()) {
    out["query"] = render_named(*res.query.query, lm.graphs);
    if (auto p = classify_pattern(*res.query.query)) out["pattern"] = std::string(to_string(*p));
    json by_split;
    for (Split s : {Split::train, Split::valid, Split::test}) {
      try {
        const AnswerSet a = execute(lm.graphs.graph(s), *res.query.query);
        by_split[std::string(to_string(s))] = {{"answers", names_of(a, lm.graphs)}, {"jaccard", jaccard(a, o)}};
      } catch (const Error& e) {
        by_split[std::string(to_string(s))] = {{"error", e.what()}};
      }
    }
    out["explains"] = by_split;
  } else {
    out["query"] = nullptr;
    out["parse_error"] = {{"index", res.query.error_index}, {"message", res.query.error}};
  }
  const fs::path p = run.out / "abduction.json";
  write_text(p, out.dump(2) + "\n");
  run.add(p);
  run.metrics = out;
}

void cmd_deduce(Run& run) {
  const json& c = run.config;
  LoadedModel lm = load_model(c);
  ReflectiveConfig rc = sampler_config(c, lm.graphs);
  const Pattern pattern = parse_pattern(str(c, "pattern"));
  std::vector<EntityId> anchors;
  for (const auto& n : list_of(c.at("anchors"))) anchors.push_back(lm.graphs.entities.id_of(n));
  std::vector<RelationId> rels;
  for (const auto& n : list_of(c.at("relations"))) rels.push_back(lm.graphs.relations.id_of(n));
  const QueryNode q = instantiate_pattern(pattern, anchors, rels);
  const SamplingContext ctx{lm.ckpt.model, lm.vocab, lm.ckpt.meta.layout, lm.ckpt.meta.schedule};
  Rng rng(seed_of(c));
  const AnswerSet a = deduce(ctx, q, rc, rng);
  json out{{"query", render_named(q, lm.graphs)}, {"answers", names_of(a, lm.graphs)}};
  for (Split s : {Split::train, Split::test}) {
    out[std::string("graph_") + std::string(to_string(s))] = names_of(execute(lm.graphs.graph(s), q), lm.graphs);
  }
  const fs::path p = run.out / "deduction.json";
  write_text(p, out.dump(2) + "\n");
  run.add(p);
  run.metrics = out;
}

void cmd_eval(Run& run) {
  const json& c = run.config;
  const std::uint64_t seed = seed_of(c);
  const fs::path pairs_path = pairs_file(str(c, "pairs"), Split::test);
  require_file(pairs_path, "pairs");
  LoadedModel lm = load_model(c, str(c, "pairs"));
  const ReflectiveConfig rc = sampler_config(c, lm.graphs);
  auto all = read_pairs(pairs_path, lm.vocab);
  const auto wanted = patterns_of(c.at("patterns"));
  std::vector<ReasoningPair> pairs;
  for (auto& p : all) {
    if (std::find(wanted.begin(), wanted.end(), p.pattern) != wanted.end()) pairs.push_back(std::move(p));
  }
  if (const std::size_t limit = uint(c, "limit"); limit > 0 && pairs.size() > limit) pairs.resize(limit);
  const SamplingContext ctx{lm.ckpt.model, lm.vocab, lm.ckpt.meta.layout, lm.ckpt.meta.schedule};
  const std::size_t threads = threads_of(c);
  const std::string mode = str(c, "mode");
  json report{{"mode", mode}, {"pairs", pairs.size()}, {"seed", seed}};
  std::string table;
  if (mode == "abduce") {
    const AbductionReport r = score_abduction(ctx, pairs, rc, lm.graphs.test, seed, threads);
    report["verify"] = str(c, "verify");
    report["abduction"] = to_json(r);
    table = "## Abduction (Jaccard x100)\n\n" + markdown_table(r);
    if (c.at("baseline").get<bool>()) {
      const AbductionReport b = score_random_baseline(pairs, lm.graphs.test, derive_seed(seed, 11));
      report["random_baseline"] = to_json(b);
      table += "\n## Random-query baseline\n\n" + markdown_table(b);
    }
    run.metrics = {{"average", r.average}, {"model_evals", r.model_evals}};
  } else if (mode == "deduce") {
    const DeductionReport r = score_deduction(ctx, pairs, rc, seed, threads);
    report["deduction"] = to_json(r);
    table = "## Deduction (x100)\n\n" + markdown_table(r);
    run.metrics = to_json(r.filtered);
  } else {
    throw Error(ErrorCode::invalid_argument, "mode must be abduce or deduce");
  }
  report["config"] = {{"steps", rc.steps},
                      {"reflect_every", rc.reflect_every},
                      {"candidates", rc.candidates},
                      {"temperature", rc.temperature},
                      {"checkpoint", str(c, "checkpoint")}};
  const fs::path rp = run.out / "report.json";
  write_text(rp, report.dump(2) + "\n");
  run.add(rp);
  const fs::path mp = run.out / "report.md";
  write_text(mp, table);
  run.add(mp);
}

void cmd_report(Run& run) {
  const auto inputs = list_of(run.config.at("inputs"));
  if (inputs.empty()) throw Error(ErrorCode::invalid_argument, "missing --inputs");
  std::ostringstream md;
  json rows = json::array();
  for (const auto& in : inputs) {
    fs::path p = in;
    if (fs::is_directory(p)) p /= "report.json";
    require_file(p, "inputs");
    const json r = read_json(p);
    md << "### " << p.string() << "\n\n";
    json row{{"source", p.string()}, {"mode", r.value("mode", "")}};
    if (r.contains("abduction")) {
      md << "| pattern | count | Jaccard |\n|---|---|---|\n";
      for (const auto& pr : r["abduction"]["patterns"]) {
        md << "| " << pr["pattern"].get<std::string>() << " | " << pr["count"] << " | "
           << (pr["jaccard"].is_null() ? std::string("-") : std::to_string(pr["jaccard"].get<double>())) << " |\n";
      }
      md << "| avg | " << r["abduction"]["pairs"] << " | " << r["abduction"]["average"].get<double>() << " |\n\n";
      row["average"] = r["abduction"]["average"];
    }
    if (r.contains("deduction")) {
      const json& f = r["deduction"]["filtered"];
      md << "| MRR | Hits@1 | Hits@3 | Hits@10 |\n|---|---|---|---|\n| " << f["mrr"].get<double>() << " | "
         << f["hits@1"].get<double>() << " | " << f["hits@3"].get<double>() << " | " << f["hits@10"].get<double>()
         << " |\n\n";
      row["filtered"] = f;
    }
    rows.push_back(row);
  }
  const fs::path p = run.out / "summary.md";
  write_text(p, md.str());
  run.add(p);
  run.metrics = {{"reports", rows}};
}

}  // namespace

PipelineResult run_pipeline(std::string_view command, const json& config) {
  const auto t0 = std::chrono::steady_clock::now();
  Run run;
  run.config = effective_config(command, config);
  run.out = str(run.config, "out");
  run.verbose = run.config.at("verbose").get<bool>();
  fs::create_directories(run.out);

  if (command == "ingest") cmd_ingest(run);
  else if (command == "sample-queries") cmd_sample_queries(run);
  else if (command == "train") cmd_train(run);
  else if (command == "train-rl") cmd_train_rl(run);
  else if (command == "abduce") cmd_abduce(run);
  else if (command == "deduce") cmd_deduce(run);
  else if (command == "eval") cmd_eval(run);
  else cmd_report(run);

  json artifacts = json::array();
  for (const auto& a : run.artifacts) artifacts.push_back(a.string());
  PipelineResult res;
  res.manifest = {{"command", std::string(command)},
                  {"version", version_string()},
                  {"config", run.config},
                  {"wall_time_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
                  {"metrics", run.metrics},
                  {"artifacts", artifacts}};
  res.manifest_path = run.out / "run.json";
  write_text(res.manifest_path, res.manifest.dump(2) + "\n");
  return res;
}

}  // namespace dark
