// pricegrid: price-band prediction for 3D-printing service listings.
//
// Exit codes: 0 success, 1 I/O, 2 configuration, 3 schema fingerprint mismatch,
// 4 lookup failure (unknown printer model).

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pricegrid/pipeline.hpp"

namespace pg = pricegrid;
namespace pl = pricegrid::pipeline;

namespace {

struct Globals {
  std::uint64_t seed = 7;
  int jobs = 0;  // 0: PRICEGRID_JOBS or 1
  bool json = false;
  std::optional<std::string> materials, printers, keywords;

  int resolved_jobs() const {
    if (jobs > 0) return jobs;
    if (const char* env = std::getenv("PRICEGRID_JOBS")) {
      try {
        const int v = std::stoi(env);
        if (v > 0) return v;
      } catch (const std::exception&) {
      }
      throw pg::ConfigError(fmt::format("PRICEGRID_JOBS: expected a positive integer, got '{}'", env));
    }
    return 1;
  }

  pg::features::Catalog catalog() const {
    auto opt = [](const std::optional<std::string>& s) -> std::optional<pl::fs::path> {
      if (s) return pl::fs::path(*s);
      return std::nullopt;
    };
    return pl::load_catalog(opt(materials), opt(printers), opt(keywords));
  }
};

void report(const Globals& g, const pl::RunManifest& m) {
  if (g.json) {
    std::cout << m.to_json().dump(2) << "\n";
    return;
  }
  std::cout << m.command << ": wrote";
  for (const auto& a : m.outputs) std::cout << " " << a.name;
  std::cout << "\n";
  if (!m.diagnostics.empty()) std::cout << "  " << m.diagnostics.size() << " diagnostic(s), see manifest\n";
}

pg::svm::TrainConfig load_train_config(const std::optional<std::string>& path) {
  if (!path) return {};
  return pg::svm::TrainConfig::from_json(pl::read_json(*path));
}

struct TrainOverrides {
  std::optional<double> C, gamma;
  std::optional<std::string> kernel;
  std::optional<double> tol;

  void add(CLI::App* app) {
    app->add_option("--C", C, "Regularization parameter (overrides config)");
    app->add_option("--gamma", gamma, "Kernel width (overrides config)");
    app->add_option("--kernel", kernel, "rbf | linear | polynomial | sigmoid (overrides config)");
    app->add_option("--tol", tol, "KKT tolerance (overrides config)");
  }
  void apply(pg::svm::TrainConfig& c) const {
    if (kernel) c.kernel.kind = pg::svm::kernel_kind_from_string(*kernel);
    if (C) c.C = *C;
    if (gamma) c.kernel.gamma = *gamma;
    if (tol) c.tol = *tol;
    c.validate();
  }
};

pg::eval::GridSpec load_grid(const std::optional<std::string>& path, const std::optional<std::string>& preset,
                             const std::vector<std::string>& kernels) {
  nlohmann::json j = path ? pl::read_json(*path) : nlohmann::json::object();
  if (preset) j["preset"] = *preset;
  if (!kernels.empty()) j["kernels"] = kernels;
  return pg::eval::GridSpec::from_json(j);
}

std::vector<pg::ingest::RawListing> inline_listing(const pg::ingest::RawListing& l) { return {l}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Price-band prediction for 3D-printing service listings"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads (default: PRICEGRID_JOBS or 1)");
  app.add_flag("--json", g.json, "Print machine-readable JSON on stdout");
  app.add_option("--materials", g.materials, "Material table JSON");
  app.add_option("--printers", g.printers, "Printer table JSON");
  app.add_option("--keywords", g.keywords, "Keyword dictionary JSON");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
  std::optional<std::string> gen_config, gen_region;
  std::optional<std::size_t> gen_n;
  std::string gen_out;
  gen->add_option("--config", gen_config, "Generator config JSON (overlays region defaults)");
  gen->add_option("--n", gen_n, "Number of listings");
  gen->add_option("--region", gen_region, "US | EU");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "Summarize a corpus");
  std::string stats_corpus, stats_out;
  stats->add_option("--corpus", stats_corpus, "Corpus file (.csv or .jsonl)")->required();
  stats->add_option("--out", stats_out, "Output directory")->required();

  // split
  auto* split = app.add_subcommand("split", "Fit price bins and split train/test");
  std::string split_corpus, split_out;
  pl::SplitOptions split_opts;
  std::optional<std::string> split_region;
  split->add_option("--corpus", split_corpus, "Corpus file")->required();
  split->add_option("--out", split_out, "Output directory")->required();
  split->add_option("--train-fraction", split_opts.train_fraction, "Per-class train share")->capture_default_str();
  split->add_flag("--preset-bins", split_opts.preset_bins, "Use the published US/EU boundaries");
  split->add_option("--region", split_region, "US | EU (default: first listing's region)");

  // featurize
  auto* feat = app.add_subcommand("featurize", "Fit clusters and schema on train, encode both sets, dedup test");
  std::string feat_corpus, feat_bins, feat_split, feat_out;
  pl::FeaturizeOptions feat_opts;
  std::optional<std::string> feat_corr;
  feat->add_option("--corpus", feat_corpus, "Corpus file")->required();
  feat->add_option("--bins", feat_bins, "bins.json from split")->required();
  feat->add_option("--split", feat_split, "split.json from split")->required();
  feat->add_option("--out", feat_out, "Output directory")->required();
  feat->add_option("--clusters", feat_opts.clusters, "k-means K (default 6 US, 9 EU)");
  feat->add_option("--correlation", feat_corr, "spearman | pearson");
  feat->add_option("--threshold", feat_opts.correlation_threshold, "Pruning threshold on |r|")->capture_default_str();

  // gridsearch
  auto* grid = app.add_subcommand("gridsearch", "Two-stage grid search with stratified k-fold CV");
  std::string grid_train, grid_out;
  std::optional<std::string> grid_config, grid_spec, grid_preset;
  std::vector<std::string> grid_kernels;
  TrainOverrides grid_over;
  grid->add_option("--train", grid_train, "train_features.json")->required();
  grid->add_option("--out", grid_out, "Output directory")->required();
  grid->add_option("--config", grid_config, "Base training config JSON (weights, tol, max_iter)");
  grid->add_option("--grid", grid_spec, "Grid config JSON");
  grid->add_option("--preset", grid_preset, "default | paper-fine");
  grid->add_option("--kernels", grid_kernels, "Kernels for the coarse stage")->delimiter(',');
  grid_over.add(grid);

  // train
  auto* train = app.add_subcommand("train", "Train the one-vs-one and one-vs-rest models");
  std::string train_features, train_schema, train_geo, train_bins, train_out;
  std::optional<std::string> train_config;
  TrainOverrides train_over;
  train->add_option("--train", train_features, "train_features.json")->required();
  train->add_option("--schema", train_schema, "schema.json")->required();
  train->add_option("--geo", train_geo, "geo.json")->required();
  train->add_option("--bins", train_bins, "bins.json")->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--config", train_config, "Training config JSON (e.g. best_config.json)");
  train_over.add(train);

  // eval / roc
  auto* ev = app.add_subcommand("eval", "Evaluate a model on the test features");
  auto* roc = app.add_subcommand("roc", "Per-class and micro ROC curves from one-vs-rest margins");
  std::string ev_model, ev_test, ev_out;
  for (auto* sub : {ev, roc}) {
    sub->add_option("--model", ev_model, "model.json")->required();
    sub->add_option("--test", ev_test, "test_features.json")->required();
    sub->add_option("--out", ev_out, "Output directory")->required();
  }

  // curve
  auto* curve = app.add_subcommand("curve", "Learning curve");
  std::string curve_train, curve_out;
  std::optional<std::string> curve_config;
  std::vector<double> curve_fractions = pg::eval::default_curve_fractions();
  TrainOverrides curve_over;
  curve->add_option("--train", curve_train, "train_features.json")->required();
  curve->add_option("--out", curve_out, "Output directory")->required();
  curve->add_option("--config", curve_config, "Training config JSON");
  curve->add_option("--fractions", curve_fractions, "Ascending fractions in (0,1]")->delimiter(',');
  curve_over.add(curve);

  // predict
  auto* pred = app.add_subcommand("predict", "Predict the price band of listings");
  std::string pred_model;
  std::optional<std::string> pred_listing;
  pg::ingest::RawListing inl;
  inl.listing_id = "inline";
  std::optional<double> inl_rating;
  std::string inl_region = "US";
  pred->add_option("--model", pred_model, "model.json")->required();
  pred->add_option("--listing", pred_listing, "Corpus file of listings to score (.csv or .jsonl)");
  pred->add_option("--printer", inl.printer_model, "Printer model");
  pred->add_option("--material", inl.material_name, "Material name");
  pred->add_option("--resolution", inl.resolution, "Layer resolution in microns")->capture_default_str();
  pred->add_option("--rating", inl_rating, "Average rating in [1,5]");
  pred->add_option("--reviews", inl.num_reviews, "Number of reviews")->capture_default_str();
  pred->add_option("--response-hours", inl.avg_response_time, "Average response time (hours)");
  pred->add_option("--days-active", inl.days_since_activation, "Days since activation");
  pred->add_option("--machines", inl.num_machines, "Number of machines")->capture_default_str();
  pred->add_flag("--registered", inl.registered_business, "Registered business");
  pred->add_option("--lat", inl.latitude, "Latitude");
  pred->add_option("--lon", inl.longitude, "Longitude");
  pred->add_option("--region", inl_region, "US | EU")->capture_default_str();
  pred->add_option("--description", inl.description_text, "Profile description");
  pred->add_option("--images", inl.num_sample_images, "Number of sample images");
  pred->add_option("--completion-days", inl.order_completion_days, "Order completion days")->capture_default_str();

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "gen -> split -> featurize -> gridsearch -> train -> eval -> roc -> curve");
  std::string pipe_out;
  std::optional<std::string> pipe_corpus, pipe_gen_config, pipe_grid, pipe_preset, pipe_config;
  std::optional<std::size_t> pipe_n;
  std::vector<std::string> pipe_kernels;
  bool pipe_no_curve = false, pipe_preset_bins = false;
  pipe->add_option("--out", pipe_out, "Output directory")->required();
  pipe->add_option("--corpus", pipe_corpus, "Existing corpus (skips generation)");
  pipe->add_option("--gen-config", pipe_gen_config, "Generator config JSON");
  pipe->add_option("--n", pipe_n, "Number of synthetic listings");
  pipe->add_option("--config", pipe_config, "Base training config JSON");
  pipe->add_option("--grid", pipe_grid, "Grid config JSON");
  pipe->add_option("--preset", pipe_preset, "default | paper-fine");
  pipe->add_option("--kernels", pipe_kernels, "Kernels for the coarse stage")->delimiter(',');
  pipe->add_flag("--preset-bins", pipe_preset_bins, "Use the published bin boundaries");
  pipe->add_flag("--no-curve", pipe_no_curve, "Skip the learning curve");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const int jobs = g.resolved_jobs();
    if (*gen) {
      auto cfg = gen_config ? pg::ingest::SynthConfig::from_json(pl::read_json(*gen_config))
                            : pg::ingest::SynthConfig::defaults(gen_region ? pg::region_from_string(*gen_region)
                                                                           : pg::Region::US);
      if (gen_region && gen_config) cfg.region = pg::region_from_string(*gen_region);
      if (gen_n) cfg.n_listings = *gen_n;
      cfg.seed = g.seed;
      report(g, pl::run_gen(cfg, g.catalog(), pl::OutputDir(gen_out)));
    } else if (*stats) {
      report(g, pl::run_stats(stats_corpus, g.catalog(), pl::OutputDir(stats_out)));
    } else if (*split) {
      split_opts.seed = g.seed;
      if (split_region) split_opts.region = pg::region_from_string(*split_region);
      report(g, pl::run_split(split_corpus, split_opts, pl::OutputDir(split_out)));
    } else if (*feat) {
      feat_opts.seed = g.seed;
      feat_opts.jobs = jobs;
      if (feat_corr) {
        const auto c = pg::normalize_key(*feat_corr);
        if (c == "pearson")
          feat_opts.correlation = pg::features::CorrelationMethod::Pearson;
        else if (c != "spearman")
          throw pg::ConfigError("--correlation: expected spearman or pearson");
      }
      report(g, pl::run_featurize(feat_corpus, feat_bins, feat_split, g.catalog(), feat_opts, pl::OutputDir(feat_out)));
    } else if (*grid) {
      auto base = load_train_config(grid_config);
      grid_over.apply(base);
      report(g, pl::run_gridsearch(grid_train, base, load_grid(grid_spec, grid_preset, grid_kernels), g.seed, jobs,
                                   pl::OutputDir(grid_out)));
    } else if (*train) {
      auto cfg = load_train_config(train_config);
      train_over.apply(cfg);
      report(g, pl::run_train(train_features, train_schema, train_geo, train_bins, cfg, jobs, pl::OutputDir(train_out)));
    } else if (*ev) {
      report(g, pl::run_eval(ev_model, ev_test, pl::OutputDir(ev_out)));
    } else if (*roc) {
      report(g, pl::run_roc(ev_model, ev_test, pl::OutputDir(ev_out)));
    } else if (*curve) {
      auto cfg = load_train_config(curve_config);
      curve_over.apply(cfg);
      report(g, pl::run_curve(curve_train, cfg, curve_fractions, g.seed, jobs, pl::OutputDir(curve_out)));
    } else if (*pred) {
      const auto catalog = g.catalog();
      const auto bundle = pl::load_model(pred_model);
      std::vector<pg::ingest::RawListing> listings;
      if (pred_listing) {
        listings = pl::load_corpus(*pred_listing);
      } else {
        if (inl.printer_model.empty() || inl.material_name.empty())
          throw pg::ConfigError("predict: give --listing or at least --printer and --material");
        inl.avg_rating = inl_rating;
        inl.region = pg::region_from_string(inl_region);
        listings = inline_listing(inl);
      }
      nlohmann::json all = nlohmann::json::array();
      for (const auto& l : listings) {
        const auto p = pl::predict(bundle, l, catalog);
        if (g.json) {
          auto j = p.to_json();
          j["listing_id"] = l.listing_id;
          all.push_back(j);
          continue;
        }
        std::cout << fmt::format("{}: class {} ({})\n", l.listing_id, p.price_class, p.range_label);
        for (std::size_t c = 0; c < p.classes.size(); ++c)
          std::cout << fmt::format("  margin[{}] = {:.4f}\n", p.classes[c], p.margins[c]);
        for (const auto& d : p.diagnostics) std::cout << "  note: " << d.message << "\n";
      }
      if (g.json) std::cout << all.dump(2) << "\n";
    } else if (*pipe) {
      pl::PipelineOptions opts;
      opts.seed = g.seed;
      opts.jobs = jobs;
      if (pipe_gen_config) opts.synth = pg::ingest::SynthConfig::from_json(pl::read_json(*pipe_gen_config));
      if (pipe_n) opts.synth.n_listings = *pipe_n;
      if (pipe_corpus) opts.corpus = *pipe_corpus;
      opts.split.preset_bins = pipe_preset_bins;
      opts.base = load_train_config(pipe_config);
      opts.grid = load_grid(pipe_grid, pipe_preset, pipe_kernels);
      opts.learning_curve = !pipe_no_curve;
      report(g, pl::run_pipeline(opts, g.catalog(), pl::OutputDir(pipe_out)));
    }
  } catch (const pg::FingerprintMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const pg::LookupError& e) {
    std::cerr << "error: " << e.what() << "\n";
    try {
      std::cerr << "known printer models:\n";
      for (const auto& m : g.catalog().printers.models()) std::cerr << "  " << m << "\n";
    } catch (const std::exception&) {
    }
    return 4;
  } catch (const pg::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const pg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
