#pragma once

// Declarative run configuration (JSON, one object per section) and grid
// enumeration for the command-line front end.
//
//   {
//     "name": "lr",
//     "output_dir": "results",
//     "format": "csv",
//     "threads": 4,
//     "experiment": { "epochs": 30, "batch_size": 128, "seeds": [0, 1, 2], ... },
//     "model": { "kind": "logreg", "l2": 0.0 },
//     "data": { "source": "synthetic", "features": 20, "classes": 2, ... },
//     "hyperparams": { "eta": 1e-4, "phi1": 0.5, ... },
//     "optimizers": ["adam", "adamt", {"name": "fast_adamt", "kind": "adamt", "eta": 1e-3}],
//     "grid": { "eta": [1e-4, 5e-4, 1e-3, 5e-3], "phi": [0.1, ..., 0.9], "epochs": 5 }
//   }

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "trendopt/error.hpp"
#include "trendopt/harness.hpp"
#include "trendopt/optim.hpp"

namespace trendopt {

enum class OutputFormat { Csv, Json };

struct GridAxes {
    std::vector<double> eta{1e-4, 5e-4, 1e-3, 5e-3};
    /// Tied damping axis (phi1 = phi2 = phi) unless phi1/phi2 are given.
    std::vector<double> phi{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<double> phi1;
    std::vector<double> phi2;
    std::size_t epochs = 0;  // 0: use experiment.epochs
};

struct Config {
    ExperimentSpec experiment;
    GridAxes grid;
    std::string output_dir = "results";
    OutputFormat format = OutputFormat::Csv;
    /// Raw document after overrides, used for the manifest hash.
    nlohmann::json document;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(path, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return it.key() == k; });
        if (!known) throw ConfigError(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
    }
}

template <class T>
T get_as(const json& obj, const std::string& key, const std::string& path, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path.empty() ? key : path + "." + key, std::string("wrong type: ") + e.what());
    }
}

inline void read_hyperparams(const json& obj, const std::string& path, HyperParams& hp, bool allow_identity) {
    if (allow_identity)
        reject_unknown(obj, path, {"name", "kind", "eta", "beta1", "gamma1", "phi1", "beta2", "gamma2", "phi2",
                                   "epsilon", "amsgrad_bias_correction"});
    else
        reject_unknown(obj, path, {"eta", "beta1", "gamma1", "phi1", "beta2", "gamma2", "phi2", "epsilon",
                                   "amsgrad_bias_correction"});
    hp.eta = get_as(obj, "eta", path, hp.eta);
    hp.beta1 = get_as(obj, "beta1", path, hp.beta1);
    hp.gamma1 = get_as(obj, "gamma1", path, hp.gamma1);
    hp.phi1 = get_as(obj, "phi1", path, hp.phi1);
    hp.beta2 = get_as(obj, "beta2", path, hp.beta2);
    hp.gamma2 = get_as(obj, "gamma2", path, hp.gamma2);
    hp.phi2 = get_as(obj, "phi2", path, hp.phi2);
    hp.epsilon = get_as(obj, "epsilon", path, hp.epsilon);
    hp.amsgrad_bias_correction = get_as(obj, "amsgrad_bias_correction", path, hp.amsgrad_bias_correction);
}

inline OptimizerKind kind_at(const std::string& name, const std::string& path) {
    try {
        return parse_optimizer_kind(name);
    } catch (const InvalidArgument& e) {
        throw ConfigError(path, e.what());
    }
}

/// Splits "a.b.c" and assigns a JSON value there, creating objects as needed.
inline void set_path(json& doc, const std::string& dotted, const json& value) {
    json* node = &doc;
    std::stringstream ss(dotted);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError(dotted, "empty override key");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
        node = &(*node)[parts[i]];
        if (!node->is_object()) throw ConfigError(dotted, "override path crosses a non-object");
    }
    (*node)[parts.back()] = value;
}

}  // namespace detail

/// Applies "key.path=value" overrides; values parse as JSON when possible and
/// fall back to plain strings.
inline void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError(o, "override must look like key=value");
        const std::string key = o.substr(0, eq);
        const std::string raw = o.substr(eq + 1);
        nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
        if (value.is_discarded()) value = raw;
        detail::set_path(doc, key, value);
    }
}

inline Config parse_config(const nlohmann::json& doc) {
    using detail::get_as;
    using nlohmann::json;
    detail::reject_unknown(doc, "", {"name", "output_dir", "format", "threads", "experiment", "model", "data",
                                     "hyperparams", "optimizers", "grid"});
    Config cfg;
    cfg.document = doc;
    ExperimentSpec& ex = cfg.experiment;
    ex.name = get_as<std::string>(doc, "name", "", ex.name);
    if (ex.name.empty() || ex.name.find('/') != std::string::npos)
        throw ConfigError("name", "must be a non-empty plain file name");
    cfg.output_dir = get_as<std::string>(doc, "output_dir", "", cfg.output_dir);
    const auto fmt = get_as<std::string>(doc, "format", "", "csv");
    if (fmt == "csv") cfg.format = OutputFormat::Csv;
    else if (fmt == "json") cfg.format = OutputFormat::Json;
    else throw ConfigError("format", "expected csv or json");
    ex.threads = get_as<std::size_t>(doc, "threads", "", std::max(1u, std::thread::hardware_concurrency()));
    if (ex.threads == 0) throw ConfigError("threads", "must be >= 1");

    if (doc.contains("experiment")) {
        const json& e = doc.at("experiment");
        detail::reject_unknown(e, "experiment", {"epochs", "batch_size", "seeds", "track_regret", "regret_l2", "early_stop"});
        ex.epochs = get_as(e, "epochs", "experiment", ex.epochs);
        ex.batch_size = get_as(e, "batch_size", "experiment", ex.batch_size);
        ex.seeds = get_as(e, "seeds", "experiment", ex.seeds);
        ex.track_regret = get_as(e, "track_regret", "experiment", ex.track_regret);
        ex.regret_l2 = get_as(e, "regret_l2", "experiment", ex.regret_l2);
        ex.early_stop = get_as(e, "early_stop", "experiment", ex.early_stop);
    }

    if (doc.contains("model")) {
        const json& m = doc.at("model");
        detail::reject_unknown(m, "model", {"kind", "hidden", "activation", "dropout", "l2"});
        const auto kind = get_as<std::string>(m, "kind", "model", "logreg");
        if (kind == "logreg") ex.model.kind = ModelKind::LogReg;
        else if (kind == "mlp") ex.model.kind = ModelKind::Mlp;
        else throw ConfigError("model.kind", "expected logreg or mlp");
        ex.model.hidden = get_as(m, "hidden", "model", ex.model.hidden);
        const auto act = get_as<std::string>(m, "activation", "model", "relu");
        if (act == "relu") ex.model.activation = Activation::ReLU;
        else if (act == "tanh") ex.model.activation = Activation::Tanh;
        else throw ConfigError("model.activation", "expected relu or tanh");
        ex.model.dropout = get_as(m, "dropout", "model", ex.model.dropout);
        ex.model.l2 = get_as(m, "l2", "model", ex.model.l2);
        if (ex.model.kind == ModelKind::Mlp) {
            if (ex.model.hidden.empty()) throw ConfigError("model.hidden", "mlp needs at least one hidden layer");
            if (!ex.model.dropout.empty() && ex.model.dropout.size() != ex.model.hidden.size())
                throw ConfigError("model.dropout", "one probability per hidden layer");
            for (double p : ex.model.dropout)
                if (!(p >= 0.0 && p < 1.0)) throw ConfigError("model.dropout", "probabilities must lie in [0, 1)");
        }
    }

    if (doc.contains("data")) {
        const json& d = doc.at("data");
        detail::reject_unknown(d, "data", {"source", "seed", "n_train", "n_test", "features", "classes", "separation",
                                           "train_images", "train_labels", "test_images", "test_labels",
                                           "signed_range"});
        DatasetSpec& ds = ex.data;
        const auto src = get_as<std::string>(d, "source", "data", "synthetic");
        if (src == "synthetic") ds.source = DataSource::Synthetic;
        else if (src == "idx") ds.source = DataSource::Idx;
        else throw ConfigError("data.source", "expected synthetic or idx");
        ds.seed = get_as(d, "seed", "data", ds.seed);
        ds.n_train = get_as(d, "n_train", "data", ds.n_train);
        ds.n_test = get_as(d, "n_test", "data", ds.n_test);
        ds.features = get_as(d, "features", "data", ds.features);
        ds.classes = get_as(d, "classes", "data", ds.classes);
        ds.separation = get_as(d, "separation", "data", ds.separation);
        ds.train_images = get_as(d, "train_images", "data", ds.train_images);
        ds.train_labels = get_as(d, "train_labels", "data", ds.train_labels);
        ds.test_images = get_as(d, "test_images", "data", ds.test_images);
        ds.test_labels = get_as(d, "test_labels", "data", ds.test_labels);
        ds.signed_range = get_as(d, "signed_range", "data", ds.signed_range);
        if (ds.source == DataSource::Idx &&
            (ds.train_images.empty() || ds.train_labels.empty() || ds.test_images.empty() || ds.test_labels.empty()))
            throw ConfigError("data", "idx source needs train/test image and label paths");
    }

    HyperParams shared;
    if (doc.contains("hyperparams")) detail::read_hyperparams(doc.at("hyperparams"), "hyperparams", shared, false);

    if (doc.contains("optimizers")) {
        const json& list = doc.at("optimizers");
        if (!list.is_array()) throw ConfigError("optimizers", "expected a list");
        std::set<std::string> names;
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string path = "optimizers[" + std::to_string(i) + "]";
            OptimizerSpec o;
            o.hp = shared;
            if (list[i].is_string()) {
                o.name = list[i].get<std::string>();
                o.hp.kind = detail::kind_at(o.name, path);
            } else if (list[i].is_object()) {
                const auto kind = get_as<std::string>(list[i], "kind", path, "");
                if (kind.empty()) throw ConfigError(path + ".kind", "missing optimizer kind");
                o.hp.kind = detail::kind_at(kind, path + ".kind");
                o.name = get_as<std::string>(list[i], "name", path, kind);
                detail::read_hyperparams(list[i], path, o.hp, true);
            } else {
                throw ConfigError(path, "expected a name or an object");
            }
            if (!names.insert(o.name).second) throw ConfigError(path, "duplicate optimizer name '" + o.name + "'");
            try {
                o.hp.validate();
            } catch (const InvalidArgument& e) {
                throw ConfigError(path, e.what());
            }
            ex.optimizers.push_back(std::move(o));
        }
    }

    if (doc.contains("grid")) {
        const json& g = doc.at("grid");
        detail::reject_unknown(g, "grid", {"eta", "phi", "phi1", "phi2", "epochs"});
        cfg.grid.eta = get_as(g, "eta", "grid", cfg.grid.eta);
        cfg.grid.phi = get_as(g, "phi", "grid", cfg.grid.phi);
        cfg.grid.phi1 = get_as(g, "phi1", "grid", cfg.grid.phi1);
        cfg.grid.phi2 = get_as(g, "phi2", "grid", cfg.grid.phi2);
        cfg.grid.epochs = get_as(g, "epochs", "grid", cfg.grid.epochs);
        if (cfg.grid.eta.empty()) throw ConfigError("grid.eta", "empty axis");
        if (cfg.grid.phi1.empty() != cfg.grid.phi2.empty())
            throw ConfigError("grid", "phi1 and phi2 must be given together");
        if (cfg.grid.phi.empty() && cfg.grid.phi1.empty()) throw ConfigError("grid.phi", "empty axis");
    }
    try {
        ex.validate();
    } catch (const ConfigError& e) {
        // ExperimentSpec reports bare field names; map them onto the document layout.
        const std::string& k = e.key_path();
        const bool in_experiment = k == "epochs" || k == "batch_size" || k == "seeds" || k == "track_regret" ||
                                   k == "regret_l2";
        if (!in_experiment) throw;
        const std::string what = e.what();
        throw ConfigError("experiment." + k, what.substr(k.size() + 2));
    }
    return cfg;
}

inline Config load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot read config file '" + path + "'");
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false, true);
    if (doc.is_discarded()) throw ConfigError("", "config file '" + path + "' is not valid JSON");
    apply_overrides(doc, overrides);
    return parse_config(doc);
}

// ---------------------------------------------------------------------------

struct GridCell {
    double eta = 0.0;
    double phi1 = 0.0;
    double phi2 = 0.0;
};

/// Cells in declaration order, eta outermost. With a tied axis phi1 = phi2.
inline std::vector<GridCell> enumerate_grid(const GridAxes& axes) {
    std::vector<GridCell> cells;
    for (double eta : axes.eta) {
        if (!axes.phi1.empty()) {
            for (double p1 : axes.phi1)
                for (double p2 : axes.phi2) cells.push_back({eta, p1, p2});
        } else {
            for (double p : axes.phi) cells.push_back({eta, p, p});
        }
    }
    return cells;
}

}  // namespace trendopt
