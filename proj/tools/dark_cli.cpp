#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "dark.h"
#include "json.hpp"

using nlohmann::json;

namespace {

const std::map<std::string, std::string> kAbout{
    {"ingest", "split a triple file (or a synthetic graph) into nested train/valid/test graphs"},
    {"sample-queries", "sample query/answer pairs for the 13 patterns on each split graph"},
    {"train", "train the masked-diffusion denoiser on sampled pairs"},
    {"train-rl", "fine-tune a checkpoint with group-relative policy optimization"},
    {"abduce", "generate a query that explains an observed entity set"},
    {"deduce", "answer one grounded query pattern with the model"},
    {"eval", "score abduction (Jaccard) or deduction (MRR/Hits@k) on a pair file"},
    {"report", "combine report.json files into one markdown summary"},
};

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (char& ch : f) {
    if (ch == '_') ch = '-';
  }
  return f;
}

struct Subcommand {
  std::string name;
  CLI::App* app = nullptr;
  json defaults;
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> options;
};

json convert(const std::string& key, const json& def, const std::string& text) {
  try {
    if (def.is_number_integer() || (key == "seed" && def.is_null())) {
      std::size_t used = 0;
      const long long v = std::stoll(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    }
    if (def.is_number()) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    }
  } catch (const std::exception&) {
    throw CLI::ValidationError("--" + flag_name(key), "expected a number, got '" + text + "'");
  }
  return text;
}

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  return json::parse(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked-diffusion abductive and deductive reasoning over knowledge graphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dark_version()));

  std::vector<Subcommand> subs;
  std::size_t n = 0;
  dark_command_count(&n);
  subs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const char* name = nullptr;
    dark_command_name(i, &name);
    char* defaults = nullptr;
    if (dark_default_config(name, &defaults) != DARK_OK) {
      std::cerr << "error: " << dark_last_error() << "\n";
      return 1;
    }
    Subcommand& s = subs.emplace_back();
    s.name = name;
    s.defaults = json::parse(defaults);
    dark_string_free(defaults);
    auto it = kAbout.find(s.name);
    s.app = app.add_subcommand(s.name, it == kAbout.end() ? "" : it->second);
    s.app->add_option("--config", s.config_file, "JSON config file; flags override its values");
    for (const auto& [key, def] : s.defaults.items()) {
      const std::string flag = "--" + flag_name(key);
      if (def.is_boolean()) {
        s.flags[key] = def.get<bool>();
        s.options[key] = s.app->add_flag(flag + ",!--no-" + flag_name(key), s.flags[key],
                                         std::string("default: ") + (def.get<bool>() ? "on" : "off"));
      } else {
        const std::string shown = def.is_null() ? "required" : (def.is_string() ? def.get<std::string>() : def.dump());
        s.options[key] = s.app->add_option(flag, s.values[key], "default: " + (shown.empty() ? "none" : shown));
      }
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  for (Subcommand& s : subs) {
    if (!s.app->parsed()) continue;
    json config = json::object();
    config["verbose"] = true;
    try {
      if (!s.config_file.empty()) {
        const json file = read_config_file(s.config_file);
        for (const auto& [k, v] : file.items()) config[k] = v;
      }
      for (const auto& [key, opt] : s.options) {
        if (opt->count() == 0) continue;
        const json& def = s.defaults[key];
        config[key] = def.is_boolean() ? json(s.flags[key]) : convert(key, def, s.values[key]);
      }
    } catch (const CLI::ParseError& e) {
      std::cerr << "error: " << e.what() << "\n\n" << s.app->help();
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }

    char* manifest = nullptr;
    if (dark_pipeline_run(s.name.c_str(), config.dump().c_str(), &manifest) != DARK_OK) {
      std::cerr << "error: " << dark_last_error() << "\n";
      return 1;
    }
    const json m = json::parse(manifest);
    dark_string_free(manifest);
    std::cout << m["metrics"].dump(2) << "\n";
    std::cerr << "wrote " << m["artifacts"].size() << " artifacts, manifest in "
              << m["config"]["out"].get<std::string>() << "/run.json\n";
    return 0;
  }
  return 2;
}
