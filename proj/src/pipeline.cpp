#include "pricegrid/pipeline.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

namespace pricegrid::pipeline {

namespace {

nlohmann::json diagnostics_json(const std::vector<Diagnostic>& ds) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& d : ds) j.push_back({{"where", d.where}, {"message", d.message}});
  return j;
}

// Stream indices for derive_seed.
enum SeedStream : std::uint64_t { kSplitStream = 1, kGeoStream = 2, kGridStream = 3, kCurveStream = 4 };

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return ss.str();
}

void write_text(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

nlohmann::json RunManifest::to_json() const {
  auto artifacts = [](const std::vector<Artifact>& as) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& a : as) j.push_back({{"name", a.name}, {"sha256", a.sha256}});
    return j;
  };
  return {{"command", command},
          {"config", config},
          {"seeds", seeds},
          {"inputs", artifacts(inputs)},
          {"outputs", artifacts(outputs)},
          {"diagnostics", diagnostics_json(diagnostics)}};
}

OutputDir::OutputDir(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw IoError("cannot create directory " + root_.string() + ": " + ec.message());
}

void OutputDir::write(const std::string& name, std::string_view content, RunManifest& manifest) const {
  write_text(root_ / name, content);
  manifest.outputs.push_back({name, sha256_hex(content)});
}

void OutputDir::write_json(const std::string& name, const nlohmann::json& j, RunManifest& manifest) const {
  write(name, j.dump(2) + "\n", manifest);
}

void OutputDir::finish(const RunManifest& manifest) const {
  write_text(root_ / ("manifest_" + manifest.command + ".json"), manifest.to_json().dump(2) + "\n");
}

void record_input(const fs::path& path, RunManifest& manifest) {
  manifest.inputs.push_back({path.filename().string(), sha256_hex(read_text(path))});
}

features::Catalog load_catalog(const std::optional<fs::path>& materials, const std::optional<fs::path>& printers,
                               const std::optional<fs::path>& keywords) {
  features::Catalog c;
  if (materials) c.materials = features::MaterialTable::from_json(read_json(*materials));
  if (printers) c.printers = features::PrinterTable::from_json(read_json(*printers));
  if (keywords) c.keywords = features::KeywordDictionary::from_json(read_json(*keywords));
  return c;
}

std::vector<ingest::RawListing> load_corpus(const fs::path& path, std::vector<Diagnostic>* diagnostics) {
  auto parsed = ingest::parse_corpus(read_text(path), ingest::corpus_format_for_path(path.string()));
  if (diagnostics)
    for (const auto& d : parsed.diagnostics)
      diagnostics->push_back({fmt::format("row {} {}", d.row, d.field), d.message});
  if (parsed.listings.empty()) throw InfeasibleError(path.string() + ": no valid listings");
  return std::move(parsed.listings);
}

nlohmann::json FeatureTable::to_json() const {
  nlohmann::json rj = nlohmann::json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows.x.row(i);
    rj.push_back({{"id", rows.ids[i]}, {"label", rows.labels[i]}, {"x", std::vector<double>(r.begin(), r.end())}});
  }
  return {{"schema_fingerprint", schema_fingerprint}, {"columns", columns}, {"rows", rj}};
}

FeatureTable FeatureTable::from_json(const nlohmann::json& j) {
  for (const char* key : {"schema_fingerprint", "columns", "rows"})
    if (!j.contains(key)) throw SchemaError(std::string("feature table: missing '") + key + "'");
  FeatureTable t;
  t.schema_fingerprint = j["schema_fingerprint"].get<std::string>();
  t.columns = j["columns"].get<std::vector<std::string>>();
  t.rows.x = FeatureMatrix(t.columns.size());
  for (const auto& r : j["rows"]) {
    const auto x = r.at("x").get<std::vector<double>>();
    if (x.size() != t.columns.size()) throw SchemaError("feature table: row width differs from column count");
    t.rows.ids.push_back(r.at("id").get<std::string>());
    t.rows.labels.push_back(r.at("label").get<int>());
    t.rows.x.push_back(x);
  }
  return t;
}

FeatureTable load_features(const fs::path& path) { return FeatureTable::from_json(read_json(path)); }

nlohmann::json ModelBundle::to_json() const {
  return {{"schema_fingerprint", fingerprint()},
          {"schema", schema.to_json()},
          {"geo", geo.to_json()},
          {"binning", binning.to_json()},
          {"ovo", ovo.to_json()},
          {"ovr", ovr.to_json()}};
}

ModelBundle ModelBundle::from_json(const nlohmann::json& j) {
  for (const char* key : {"schema_fingerprint", "schema", "geo", "binning", "ovo", "ovr"})
    if (!j.contains(key)) throw SchemaError(std::string("model: missing '") + key + "'");
  ModelBundle b;
  b.schema = features::FeatureSchema::from_json(j["schema"]);
  const std::string declared = j["schema_fingerprint"].get<std::string>();
  if (b.schema.fingerprint() != declared) throw FingerprintMismatch(declared, b.schema.fingerprint());
  b.geo = features::GeoModel::from_json(j["geo"]);
  b.binning = labeling::PriceBinning::from_json(j["binning"]);
  b.ovo = svm::MulticlassSvm::from_json(j["ovo"], declared);
  b.ovr = svm::OvrEnsemble::from_json(j["ovr"]);
  return b;
}

ModelBundle load_model(const fs::path& path, const std::string& expected_fingerprint) {
  auto b = ModelBundle::from_json(read_json(path));
  if (!expected_fingerprint.empty() && b.fingerprint() != expected_fingerprint)
    throw FingerprintMismatch(b.fingerprint(), expected_fingerprint);
  return b;
}

RunManifest run_gen(const ingest::SynthConfig& config, const features::Catalog& catalog, const OutputDir& out) {
  config.validate();
  RunManifest m;
  m.command = "gen";
  m.config = config.to_json();
  m.seeds["synthetic"] = config.seed;
  const auto listings = ingest::generate_synthetic(config, catalog);
  out.write("corpus.csv", ingest::serialize_corpus(listings, ingest::CorpusFormat::CSV), m);
  out.finish(m);
  return m;
}

RunManifest run_stats(const fs::path& corpus, const features::Catalog& catalog, const OutputDir& out) {
  RunManifest m;
  m.command = "stats";
  record_input(corpus, m);
  const auto listings = load_corpus(corpus, &m.diagnostics);
  out.write_json("stats.json", ingest::corpus_stats(listings, catalog).to_json(), m);
  out.finish(m);
  return m;
}

RunManifest run_split(const fs::path& corpus, const SplitOptions& opts, const OutputDir& out) {
  RunManifest m;
  m.command = "split";
  m.config = {{"train_fraction", opts.train_fraction}, {"bins", opts.preset_bins ? "preset" : "fitted"}};
  m.seeds["split"] = opts.seed;
  record_input(corpus, m);
  const auto listings = load_corpus(corpus, &m.diagnostics);
  const Region region = opts.region.value_or(listings.front().region);

  labeling::PriceBinning bins;
  if (opts.preset_bins) {
    bins = labeling::PriceBinning::preset(region);
  } else {
    std::vector<double> prices;
    prices.reserve(listings.size());
    for (const auto& l : listings) prices.push_back(l.price);
    bins = labeling::fit_bins(prices, region);
  }
  std::vector<int> labels;
  for (const auto& l : listings) {
    const auto a = labeling::assign_class(l.price, bins);
    if (a.diagnostic) m.diagnostics.push_back({l.listing_id, *a.diagnostic});
    labels.push_back(a.cls.value);
  }
  const auto idx = labeling::stratified_split_indices(labels, opts.train_fraction, derive_seed(opts.seed, kSplitStream));
  nlohmann::json train = nlohmann::json::array(), test = nlohmann::json::array();
  for (std::size_t i : idx.train) train.push_back({{"id", listings[i].listing_id}, {"label", labels[i]}});
  for (std::size_t i : idx.test) test.push_back({{"id", listings[i].listing_id}, {"label", labels[i]}});

  out.write_json("bins.json", bins.to_json(), m);
  out.write_json("split.json", {{"seed", opts.seed}, {"train", train}, {"test", test}}, m);
  out.finish(m);
  return m;
}

namespace {

struct SplitRef {
  std::string id;
  int label;
};

std::vector<SplitRef> split_part(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw SchemaError(std::string("split: missing '") + key + "'");
  std::vector<SplitRef> out;
  for (const auto& r : j[key]) out.push_back({r.at("id").get<std::string>(), r.at("label").get<int>()});
  return out;
}

}  // namespace

RunManifest run_featurize(const fs::path& corpus, const fs::path& bins_path, const fs::path& split_path,
                          const features::Catalog& catalog, const FeaturizeOptions& opts, const OutputDir& out) {
  RunManifest m;
  m.command = "featurize";
  m.config = {{"correlation_threshold", opts.correlation_threshold},
              {"correlation", opts.correlation == features::CorrelationMethod::Spearman ? "spearman" : "pearson"}};
  m.seeds["geo"] = derive_seed(opts.seed, kGeoStream);
  record_input(corpus, m);
  record_input(bins_path, m);
  record_input(split_path, m);
  const auto listings = load_corpus(corpus, &m.diagnostics);
  const auto bins = labeling::PriceBinning::from_json(read_json(bins_path));
  const auto split = read_json(split_path);
  const auto train_refs = split_part(split, "train");
  const auto test_refs = split_part(split, "test");

  std::unordered_map<std::string, const ingest::RawListing*> by_id;
  for (const auto& l : listings) by_id[l.listing_id] = &l;
  auto resolve = [&](const std::vector<SplitRef>& refs) {
    std::vector<std::pair<const ingest::RawListing*, int>> out_rows;
    for (const auto& r : refs) {
      auto it = by_id.find(r.id);
      if (it == by_id.end()) throw SchemaError("split references unknown listing " + r.id);
      out_rows.push_back({it->second, r.label});
    }
    return out_rows;
  };
  const auto train_rows = resolve(train_refs);
  const auto test_rows = resolve(test_refs);

  std::vector<features::GeoPoint> pts;
  for (const auto& [l, label] : train_rows) pts.push_back({l->latitude, l->longitude});
  const std::size_t k = opts.clusters.value_or(features::default_cluster_count(bins.region));
  m.config["clusters"] = k;
  const auto km = features::kmeans_fit(pts, k, derive_seed(opts.seed, kGeoStream), 10, opts.jobs);

  // Correlation analysis over the rated training listings.
  {
    std::vector<features::NamedColumn> cols = {{"avg_rating", {}},
                                               {"print_quality_rating", {}},
                                               {"speed_rating", {}},
                                               {"service_rating", {}},
                                               {"communication_rating", {}}};
    for (const auto& [l, label] : train_rows) {
      if (!l->avg_rating || !l->print_quality_rating || !l->speed_rating || !l->service_rating ||
          !l->communication_rating)
        continue;
      cols[0].values.push_back(*l->avg_rating);
      cols[1].values.push_back(*l->print_quality_rating);
      cols[2].values.push_back(*l->speed_rating);
      cols[3].values.push_back(*l->service_rating);
      cols[4].values.push_back(*l->communication_rating);
    }
    if (cols[0].values.size() >= 2) {
      auto report = features::correlation_matrix(cols, opts.correlation);
      const auto kept = features::prune_correlated(report, opts.correlation_threshold);
      auto j = report.to_json();
      j["retained"] = kept;
      out.write_json("correlation.json", j, m);
    } else {
      m.diagnostics.push_back({"correlation", "fewer than 2 rated training listings; analysis skipped"});
    }
  }

  auto derive_all = [&](const std::vector<std::pair<const ingest::RawListing*, int>>& rows,
                        std::vector<features::DerivedFeatures>& derived, std::vector<int>& labels) {
    for (const auto& [l, label] : rows) {
      try {
        derived.push_back(features::derive_features(*l, catalog, km.model));
        labels.push_back(label);
      } catch (const LookupError& e) {
        m.diagnostics.push_back({l->listing_id, std::string(e.what()) + "; listing excluded"});
      }
    }
  };
  std::vector<features::DerivedFeatures> train_d, test_d;
  std::vector<int> train_y, test_y;
  derive_all(train_rows, train_d, train_y);
  derive_all(test_rows, test_d, test_y);

  auto fit = features::fit_schema(train_d);
  m.diagnostics.insert(m.diagnostics.end(), fit.diagnostics.begin(), fit.diagnostics.end());
  const auto& schema = fit.schema;
  const std::string fp = schema.fingerprint();

  auto encode_all = [&](const std::vector<features::DerivedFeatures>& derived, const std::vector<int>& labels) {
    labeling::LabeledSet set;
    set.x = FeatureMatrix(schema.arity());
    for (std::size_t i = 0; i < derived.size(); ++i) {
      auto enc = features::encode(derived[i], schema);
      m.diagnostics.insert(m.diagnostics.end(), enc.diagnostics.begin(), enc.diagnostics.end());
      set.ids.push_back(enc.vector.listing_id);
      set.x.push_back(enc.vector.values);
      set.labels.push_back(labels[i]);
    }
    return set;
  };
  labeling::DatasetSplit ds;
  ds.train = encode_all(train_d, train_y);
  ds.test = encode_all(test_d, test_y);
  ds.seed = split.value("seed", std::uint64_t{0});
  ds = labeling::dedup_test(std::move(ds));

  nlohmann::json schema_json = schema.to_json();
  schema_json["fingerprint"] = fp;
  schema_json["diagnostics"] = diagnostics_json(fit.diagnostics);
  nlohmann::json geo_json = km.model.to_json();
  geo_json["inertia_history"] = km.inertia_history;
  geo_json["restart_inertia"] = km.restart_inertia;

  out.write_json("geo.json", geo_json, m);
  out.write_json("schema.json", schema_json, m);
  const auto columns = schema.column_names();
  out.write("train_features.json", FeatureTable{fp, columns, ds.train}.to_json().dump() + "\n", m);
  out.write("test_features.json", FeatureTable{fp, columns, ds.test}.to_json().dump() + "\n", m);
  out.write_json("dedup.json", labeling::split_manifest(ds), m);
  out.finish(m);
  return m;
}

RunManifest run_gridsearch(const fs::path& train_features, const svm::TrainConfig& base, const eval::GridSpec& grid,
                           std::uint64_t seed, int jobs, const OutputDir& out) {
  RunManifest m;
  m.command = "gridsearch";
  m.config = {{"base", base.to_json()}, {"grid", grid.to_json()}};
  m.seeds["folds"] = derive_seed(seed, kGridStream);
  record_input(train_features, m);
  const auto table = load_features(train_features);
  const auto res = eval::grid_search(table.rows.x, table.rows.labels, base, grid, derive_seed(seed, kGridStream), jobs);
  for (const auto* rep : {&res.coarse, &res.fine})
    for (const auto& c : rep->cells) {
      if (c.error)
        m.diagnostics.push_back({fmt::format("{} C={} gamma={}", eval::to_string(rep->stage), c.C, c.kernel.gamma),
                                 *c.error});
      if (c.not_converged)
        m.diagnostics.push_back({fmt::format("{} C={} gamma={}", eval::to_string(rep->stage), c.C, c.kernel.gamma),
                                 fmt::format("{} binary problems stopped at max_iter", c.not_converged)});
    }
  out.write_json("grid.json",
                 {{"schema_fingerprint", table.schema_fingerprint},
                  {"folds", res.plan.to_json()},
                  {"coarse", res.coarse.to_json()},
                  {"fine", res.fine.to_json()},
                  {"best", res.best.to_json()}},
                 m);
  out.write("grid.csv", eval::grid_csv(res.coarse, res.fine), m);
  out.write_json("best_config.json", res.best.to_json(), m);
  out.finish(m);
  return m;
}

RunManifest run_train(const fs::path& train_features, const fs::path& schema_path, const fs::path& geo_path,
                      const fs::path& bins_path, const svm::TrainConfig& config, int jobs, const OutputDir& out) {
  config.validate();
  RunManifest m;
  m.command = "train";
  m.config = config.to_json();
  for (const auto* p : {&train_features, &schema_path, &geo_path, &bins_path}) record_input(*p, m);
  const auto table = load_features(train_features);
  ModelBundle b;
  b.schema = features::FeatureSchema::from_json(read_json(schema_path));
  if (b.schema.fingerprint() != table.schema_fingerprint)
    throw FingerprintMismatch(b.schema.fingerprint(), table.schema_fingerprint);
  b.geo = features::GeoModel::from_json(read_json(geo_path));
  b.binning = labeling::PriceBinning::from_json(read_json(bins_path));

  const auto gram = svm::DenseGram::compute(table.rows.x, config.kernel, jobs);
  auto data = svm::TrainingSet::all(table.rows.x, table.rows.labels, &gram);
  b.ovo = svm::train_multiclass(data, config, jobs);
  b.ovo.schema_fingerprint = table.schema_fingerprint;
  b.ovr = svm::train_ovr(data, config, jobs);
  m.diagnostics.insert(m.diagnostics.end(), b.ovo.diagnostics.begin(), b.ovo.diagnostics.end());

  std::size_t hit = 0;
  for (std::size_t i = 0; i < table.rows.size(); ++i) hit += b.ovo.predict_indexed(gram, i) == table.rows.labels[i];
  m.config["train_accuracy"] = static_cast<double>(hit) / static_cast<double>(table.rows.size());
  m.config["binary_problems"] = b.ovo.stats.binary_problems + b.ovr.stats.binary_problems;
  m.config["max_kkt_violation"] = std::max(b.ovo.stats.max_kkt_violation, b.ovr.stats.max_kkt_violation);
  out.write("model.json", b.to_json().dump() + "\n", m);
  out.finish(m);
  return m;
}

namespace {

std::pair<ModelBundle, FeatureTable> load_matched(const fs::path& model, const fs::path& test_features) {
  auto table = load_features(test_features);
  auto bundle = load_model(model);
  if (bundle.fingerprint() != table.schema_fingerprint)
    throw FingerprintMismatch(bundle.fingerprint(), table.schema_fingerprint);
  if (table.rows.size() == 0) throw InfeasibleError(test_features.string() + ": empty test set");
  return {std::move(bundle), std::move(table)};
}

}  // namespace

RunManifest run_eval(const fs::path& model, const fs::path& test_features, const OutputDir& out) {
  RunManifest m;
  m.command = "eval";
  record_input(model, m);
  record_input(test_features, m);
  const auto [bundle, table] = load_matched(model, test_features);
  const auto rep = eval::evaluate(bundle.ovo, table.rows.x, table.rows.labels);
  m.diagnostics = rep.diagnostics;
  auto j = rep.to_json();
  nlohmann::json ranges = nlohmann::json::array();
  for (int c : rep.classes) ranges.push_back(bundle.binning.range_label(labeling::PriceClass(c)));
  j["class_ranges"] = ranges;
  out.write_json("eval.json", j, m);
  out.write("confusion.csv", eval::confusion_csv(rep), m);
  out.finish(m);
  return m;
}

RunManifest run_roc(const fs::path& model, const fs::path& test_features, const OutputDir& out) {
  RunManifest m;
  m.command = "roc";
  record_input(model, m);
  record_input(test_features, m);
  const auto [bundle, table] = load_matched(model, test_features);
  std::vector<std::vector<double>> scores;
  for (std::size_t i = 0; i < table.rows.size(); ++i) scores.push_back(bundle.ovr.class_scores(table.rows.x.row(i)));
  const auto roc = eval::roc_curves(scores, table.rows.labels, bundle.ovr.classes);
  m.diagnostics = roc.diagnostics;
  out.write_json("roc.json", roc.to_json(), m);
  out.write("roc.csv", eval::roc_csv(roc), m);
  out.finish(m);
  return m;
}

RunManifest run_curve(const fs::path& train_features, const svm::TrainConfig& config,
                      const std::vector<double>& fractions, std::uint64_t seed, int jobs, const OutputDir& out) {
  RunManifest m;
  m.command = "curve";
  m.config = {{"train", config.to_json()}, {"fractions", fractions}};
  m.seeds["curve"] = derive_seed(seed, kCurveStream);
  record_input(train_features, m);
  const auto table = load_features(train_features);
  const auto curve =
      eval::learning_curve(table.rows.x, table.rows.labels, config, fractions, derive_seed(seed, kCurveStream), 5, jobs);
  out.write_json("curve.json", curve.to_json(), m);
  out.write("curve.csv", eval::curve_csv(curve), m);
  out.finish(m);
  return m;
}

RunManifest run_pipeline(const PipelineOptions& opts, const features::Catalog& catalog, const OutputDir& out) {
  RunManifest m;
  m.command = "pipeline";
  m.seeds["seed"] = opts.seed;
  auto absorb = [&](const RunManifest& stage) {
    for (const auto& a : stage.outputs) m.outputs.push_back(a);
    for (const auto& d : stage.diagnostics) m.diagnostics.push_back({stage.command + ": " + d.where, d.message});
  };

  fs::path corpus;
  if (opts.corpus) {
    corpus = *opts.corpus;
    record_input(corpus, m);
  } else {
    auto synth = opts.synth;
    synth.seed = opts.seed;
    absorb(run_gen(synth, catalog, out));
    corpus = out.path("corpus.csv");
  }
  auto split = opts.split;
  split.seed = opts.seed;
  absorb(run_split(corpus, split, out));
  auto feat = opts.featurize;
  feat.seed = opts.seed;
  feat.jobs = opts.jobs;
  absorb(run_featurize(corpus, out.path("bins.json"), out.path("split.json"), catalog, feat, out));
  absorb(run_gridsearch(out.path("train_features.json"), opts.base, opts.grid, opts.seed, opts.jobs, out));
  const auto best = svm::TrainConfig::from_json(read_json(out.path("best_config.json")));
  absorb(run_train(out.path("train_features.json"), out.path("schema.json"), out.path("geo.json"),
                   out.path("bins.json"), best, opts.jobs, out));
  absorb(run_eval(out.path("model.json"), out.path("test_features.json"), out));
  absorb(run_roc(out.path("model.json"), out.path("test_features.json"), out));
  if (opts.learning_curve)
    absorb(run_curve(out.path("train_features.json"), best, opts.curve_fractions, opts.seed, opts.jobs, out));
  m.config = {{"best", best.to_json()}, {"learning_curve", opts.learning_curve}};
  out.finish(m);
  return m;
}

nlohmann::json Prediction::to_json() const {
  return {{"price_class", price_class},
          {"low_usd", low},
          {"high_usd", high},
          {"range", range_label},
          {"classes", classes},
          {"margins", margins},
          {"diagnostics", diagnostics_json(diagnostics)}};
}

Prediction predict(const ModelBundle& model, const ingest::RawListing& listing, const features::Catalog& catalog) {
  auto enc = features::encode(listing, model.schema, model.geo, catalog);
  Prediction p;
  p.diagnostics = std::move(enc.diagnostics);
  p.price_class = model.ovo.predict(enc.vector.values);
  const labeling::PriceClass cls(p.price_class);
  std::tie(p.low, p.high) = model.binning.range(cls);
  p.range_label = model.binning.range_label(cls);
  p.classes = model.ovr.classes;
  p.margins = model.ovr.class_scores(enc.vector.values);
  return p;
}

}  // namespace pricegrid::pipeline
