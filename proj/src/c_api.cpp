#include "dark.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "dark/denoiser_net.hpp"
#include "dark/pipeline.hpp"
#include "dark/reflective_sampler.hpp"

struct dark_graphs {
  dark::SplitGraphs graphs;
};

struct dark_model {
  dark::Checkpoint ckpt;
  dark::SplitGraphs graphs;
  dark::Vocabulary vocab;
};

namespace {

thread_local std::string g_last_error;

dark_status fail(dark_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename F>
dark_status guarded(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const dark::Error& e) {
    return fail(static_cast<dark_status>(static_cast<int>(e.code())), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(DARK_E_FORMAT, e.what());
  } catch (const std::exception& e) {
    return fail(DARK_E_INTERNAL, e.what());
  } catch (...) {
    return fail(DARK_E_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  if (!p) throw dark::Error(dark::ErrorCode::invalid_argument, std::string(what) + " must not be NULL");
}

dark_status copy_out(const std::vector<std::int32_t>& v, std::int32_t* out, std::size_t capacity,
                     std::size_t* count) {
  *count = v.size();
  if (v.size() > capacity) return fail(DARK_E_BUFFER_TOO_SMALL, "answer buffer too small");
  if (!v.empty()) {
    need(out, "answers");
    std::memcpy(out, v.data(), v.size() * sizeof(std::int32_t));
  }
  return DARK_OK;
}

dark::QueryNode grounding(const char* pattern, const std::int32_t* anchors, std::size_t na,
                          const std::int32_t* relations, std::size_t nr) {
  need(pattern, "pattern");
  if (na) need(anchors, "anchors");
  if (nr) need(relations, "relations");
  return dark::instantiate_pattern(dark::parse_pattern(pattern), {anchors, na}, {relations, nr});
}

}  // namespace

extern "C" {

const char* dark_version(void) {
  static const std::string v = dark::version_string();
  return v.c_str();
}

const char* dark_last_error(void) { return g_last_error.c_str(); }

void dark_string_free(char* s) { std::free(s); }

dark_status dark_command_count(size_t* out) {
  return guarded([&] {
    need(out, "out");
    *out = dark::pipeline_commands().size();
    return DARK_OK;
  });
}

dark_status dark_command_name(size_t index, const char** out) {
  return guarded([&] {
    need(out, "out");
    const auto& cmds = dark::pipeline_commands();
    if (index >= cmds.size()) return fail(DARK_E_OUT_OF_RANGE, "command index out of range");
    *out = cmds[index].c_str();
    return DARK_OK;
  });
}

dark_status dark_default_config(const char* command, char** out_json) {
  return guarded([&] {
    need(command, "command");
    need(out_json, "out_json");
    *out_json = dup_string(dark::default_config(command).dump());
    return DARK_OK;
  });
}

dark_status dark_pipeline_run(const char* command, const char* config_json, char** out_manifest_json) {
  return guarded([&] {
    need(command, "command");
    const nlohmann::json cfg = config_json ? nlohmann::json::parse(config_json) : nlohmann::json::object();
    const auto res = dark::run_pipeline(command, cfg);
    if (out_manifest_json) *out_manifest_json = dup_string(res.manifest.dump());
    return DARK_OK;
  });
}

dark_status dark_graphs_load(const char* dir, dark_graphs** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = new dark_graphs{dark::read_split_graphs(dir)};
    return DARK_OK;
  });
}

void dark_graphs_free(dark_graphs* g) { delete g; }

dark_status dark_graphs_size(const dark_graphs* g, size_t* entities, size_t* relations) {
  return guarded([&] {
    need(g, "graphs");
    if (entities) *entities = g->graphs.num_entities();
    if (relations) *relations = g->graphs.num_relations();
    return DARK_OK;
  });
}

dark_status dark_entity_id(const dark_graphs* g, const char* name, int32_t* out) {
  return guarded([&] {
    need(g, "graphs");
    need(name, "name");
    need(out, "out");
    *out = g->graphs.entities.id_of(name);
    return DARK_OK;
  });
}

dark_status dark_relation_id(const dark_graphs* g, const char* name, int32_t* out) {
  return guarded([&] {
    need(g, "graphs");
    need(name, "name");
    need(out, "out");
    *out = g->graphs.relations.id_of(name);
    return DARK_OK;
  });
}

dark_status dark_execute(const dark_graphs* g, const char* split, const char* pattern, const int32_t* anchors,
                         size_t n_anchors, const int32_t* relations, size_t n_relations, int32_t* answers,
                         size_t capacity, size_t* count) {
  return guarded([&] {
    need(g, "graphs");
    need(split, "split");
    need(count, "count");
    const auto q = grounding(pattern, anchors, n_anchors, relations, n_relations);
    return copy_out(dark::execute(g->graphs.graph(dark::parse_split(split)), q), answers, capacity, count);
  });
}

dark_status dark_jaccard(const int32_t* a, size_t na, const int32_t* b, size_t nb, double* out) {
  return guarded([&] {
    if (na) need(a, "a");
    if (nb) need(b, "b");
    need(out, "out");
    const auto sa = dark::make_answer_set({a, a + na});
    const auto sb = dark::make_answer_set({b, b + nb});
    *out = dark::jaccard(sa, sb);
    return DARK_OK;
  });
}

dark_status dark_model_load(const char* checkpoint, const char* graph_dir, dark_model** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(graph_dir, "graph_dir");
    need(out, "out");
    auto m = std::make_unique<dark_model>();
    m->ckpt = dark::load_checkpoint(checkpoint);
    m->graphs = dark::read_split_graphs(graph_dir);
    m->vocab = dark::Vocabulary(m->graphs.num_relations(), m->graphs.num_entities());
    dark::check_compatible(m->ckpt.meta, m->vocab, m->ckpt.meta.layout);
    *out = m.release();
    return DARK_OK;
  });
}

void dark_model_free(dark_model* m) { delete m; }

dark_status dark_deduce(const dark_model* m, const char* pattern, const int32_t* anchors, size_t n_anchors,
                        const int32_t* relations, size_t n_relations, size_t steps, uint64_t seed, int32_t* answers,
                        size_t capacity, size_t* count) {
  return guarded([&] {
    need(m, "model");
    need(count, "count");
    const auto q = grounding(pattern, anchors, n_anchors, relations, n_relations);
    const dark::SamplingContext ctx{m->ckpt.model, m->vocab, m->ckpt.meta.layout, m->ckpt.meta.schedule};
    dark::ReflectiveConfig cfg;
    cfg.steps = steps;
    cfg.reflect_every = 1;
    dark::Rng rng(seed);
    return copy_out(dark::deduce(ctx, q, cfg, rng), answers, capacity, count);
  });
}

dark_status dark_abduce(const dark_model* m, const int32_t* observation, size_t n, const char* sampler_json,
                        uint64_t seed, char** out_json) {
  return guarded([&] {
    need(m, "model");
    need(out_json, "out_json");
    if (n) need(observation, "observation");
    dark::ReflectiveConfig cfg;
    if (sampler_json) {
      const auto j = nlohmann::json::parse(sampler_json);
      for (const auto& [k, v] : j.items()) {
        if (k == "steps") cfg.steps = v.get<std::size_t>();
        else if (k == "reflect_every") cfg.reflect_every = v.get<std::size_t>();
        else if (k == "candidates") cfg.candidates = v.get<std::size_t>();
        else if (k == "temperature") cfg.temperature = v.get<double>();
        else if (k == "verify") {
          const auto s = v.get<std::string>();
          if (s == "model") {
            cfg.verify = dark::VerifyMode::model;
          } else if (s.rfind("graph:", 0) == 0) {
            cfg.verify = dark::VerifyMode::graph;
            cfg.verify_graph = &m->graphs.graph(dark::parse_split(s.substr(6)));
          } else {
            return fail(DARK_E_INVALID_ARGUMENT, "verify must be model or graph:<split>");
          }
        } else {
          return fail(DARK_E_INVALID_ARGUMENT, "unknown sampler key '" + k + "'");
        }
      }
    }
    const auto obs = dark::make_answer_set({observation, observation + n});
    if (obs.size() > m->ckpt.meta.layout.max_answers()) {
      return fail(DARK_E_INVALID_ARGUMENT, "observation larger than the observation region");
    }
    const dark::SamplingContext ctx{m->ckpt.model, m->vocab, m->ckpt.meta.layout, m->ckpt.meta.schedule};
    dark::Rng rng(seed);
    const auto res = dark::abduce(ctx, obs, cfg, rng);
    nlohmann::json out{{"query_tokens", res.query_tokens}, {"model_evals", res.stats.model_evals}};
    if (res.query.ok()) {
      out["query"] = dark::render(*res.query.query);
      out["parse_error"] = nullptr;
    } else {
      out["query"] = nullptr;
      out["parse_error"] = {{"index", res.query.error_index}, {"message", res.query.error}};
    }
    *out_json = dup_string(out.dump());
    return DARK_OK;
  });
}

}  // extern "C"
