#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "atgt/commands.hpp"
#include "atgt/errors.hpp"
#include "atgt/io.hpp"
#include "atgt/util.hpp"

namespace {

using nlohmann::ordered_json;

// Flag values are parsed as JSON when they look like it (numbers, booleans,
// objects for nested keys like source) and fall back to plain strings, so
// --r 0.5 arrives as a number while --out report stays a path.
ordered_json coerce(const std::string& text) {
  ordered_json v = ordered_json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (v.is_discarded()) return ordered_json(text);
  return v;
}

void print_error(const char* kind, int code, const std::string& message,
                 const std::string* path) {
  ordered_json j;
  j["error"] = ordered_json::object();
  ordered_json& err = j["error"];
  err["kind"] = kind;
  err["code"] = code;
  err["message"] = message;
  if (path != nullptr) err["path"] = *path;
  std::fputs((j.dump(2) + "\n").c_str(), stderr);
}

const char* kind_name(atgt::ErrorCode code) {
  switch (code) {
    case atgt::ErrorCode::usage:
      return "usage";
    case atgt::ErrorCode::io:
      return "io";
    case atgt::ErrorCode::validation:
      return "validation";
    case atgt::ErrorCode::numeric:
      return "numeric";
  }
  return "internal";
}

// One subcommand: the command function plus the raw text of every flag the
// user actually gave. Flags mirror top-level config keys; a given flag
// overrides the same key from --config.
struct Sub {
  CLI::App* app = nullptr;
  void (*run)(const std::string&) = nullptr;
  std::string config_path;
  std::map<std::string, std::string> values;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic datasets with ground-truth feature attribution"};
  app.require_subcommand(0, 1);

  std::vector<std::unique_ptr<Sub>> subs;
  auto make = [&](const char* name, const char* desc, void (*run)(const std::string&),
                  const std::vector<std::string>& keys) {
    auto sub = std::make_unique<Sub>();
    sub->app = app.add_subcommand(name, desc);
    sub->run = run;
    // Config keys mirror into flags verbatim; sweep's "h" needs the single
    // help spelling so --h stays free.
    sub->app->set_help_flag("--help", "Print this help message and exit");
    sub->app->add_option("--config", sub->config_path, "JSON config file");
    Sub* raw = sub.get();
    for (const std::string& key : keys) {
      raw->app->add_option_function<std::string>(
          "--" + key, [raw, key](const std::string& v) { raw->values[key] = v; },
          "config key " + key);
    }
    subs.push_back(std::move(sub));
  };

  make("modify-image", "Synthesize a labeled image dataset with tracked manipulated regions",
       atgt::commands::cmd_modify_image, {"seed", "r", "threads", "out", "source", "manips"});
  make("modify-text", "Build a labeled review dataset with tracked article positions",
       atgt::commands::cmd_modify_text,
       {"seed", "mode", "train_frac", "val_frac", "out", "source"});
  make("train-ref", "Train a reference model on a dataset manifest",
       atgt::commands::cmd_train_ref,
       {"manifest", "out", "featurizer", "vocab", "learning_rate", "batch_size", "epochs",
        "l2", "patience", "hidden", "seed"});
  make("attribute", "Compute attribution maps for every instance",
       atgt::commands::cmd_attribute,
       {"manifest", "model", "out", "method", "featurizer", "vocab", "threads",
        "smoothgrad_n", "sigma_frac", "seed", "window", "baseline"});
  make("evaluate", "Score attribution maps against the dataset's ground truth",
       atgt::commands::cmd_evaluate,
       {"manifest", "attributions", "out", "model", "featurizer", "vocab"});
  make("significance", "Probability that a capped model reaches an accuracy by chance",
       atgt::commands::cmd_significance, {"n", "p_star", "accuracy", "out"});
  make("envelope", "Shapley attribution bounds for accuracy p and keep-probability r",
       atgt::commands::cmd_envelope, {"p", "r", "out"});
  make("sweep", "Grid runs: r-sweep, visibility-sweep or accuracy-trace",
       atgt::commands::cmd_sweep,
       {"kind", "out", "p", "r_values", "manip", "h", "w", "levels", "manifest",
        "checkpoints", "featurizer", "vocab", "learning_rate", "batch_size", "l2", "hidden",
        "seed"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", 1, e.what(), nullptr);
    return 1;
  }

  Sub* active = nullptr;
  for (const auto& sub : subs)
    if (sub->app->parsed()) active = sub.get();
  if (active == nullptr) {
    std::fputs(app.help().c_str(), stdout);
    return 1;
  }

  try {
    ordered_json cfg = ordered_json::object();
    if (!active->config_path.empty()) {
      const std::string text = atgt::io::read_file(active->config_path);
      cfg = ordered_json::parse(text, nullptr, /*allow_exceptions=*/false);
      if (cfg.is_discarded() || !cfg.is_object())
        throw atgt::UsageError("config file must hold a JSON object: " + active->config_path);
    }
    for (const auto& [key, value] : active->values) cfg[key] = coerce(value);
    active->run(cfg.dump());
    return 0;
  } catch (const atgt::IoError& e) {
    const std::string path = e.path();
    print_error("io", e.exit_code(), e.what(), &path);
    return e.exit_code();
  } catch (const atgt::Error& e) {
    print_error(kind_name(e.code()), e.exit_code(), e.what(), nullptr);
    return e.exit_code();
  } catch (const std::exception& e) {
    print_error("internal", 1, e.what(), nullptr);
    return 1;
  }
}
