#pragma once

// Subcommands behind the `trendopt` executable. Each returns a process exit
// code: 0 ok, 1 configuration error, 2 runtime error (including failed
// verification properties).

#include <openssl/evp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "trendopt/config.hpp"
#include "trendopt/error.hpp"
#include "trendopt/harness.hpp"
#include "trendopt/verify_suite.hpp"

namespace trendopt::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kConfigError = 1, kRuntimeError = 2 };

struct CommandArgs {
    std::string config_path;
    std::vector<std::string> overrides;              // key.path=value
    std::optional<std::vector<std::string>> optimizers;  // replaces the optimizer list
    std::optional<std::string> output_dir;
};

// ---------------------------------------------------------------------------
// helpers

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("", "cannot read config file '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// SHA-1 of "blob <size>\0<content>", i.e. what `git hash-object` prints.
inline std::string git_blob_sha1(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, digest, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw std::runtime_error("SHA-1 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

/// Worker cap from TRENDOPT_THREADS (unset or invalid: no cap).
inline std::size_t thread_cap() {
    const char* env = std::getenv("TRENDOPT_THREADS");
    if (!env || !*env) return std::numeric_limits<std::size_t>::max();
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (*end != '\0' || v < 1) return std::numeric_limits<std::size_t>::max();
    return static_cast<std::size_t>(v);
}

inline Config prepare_config(const CommandArgs& args, const std::string& text) {
    nlohmann::json doc = nlohmann::json::parse(text, nullptr, false, true);
    if (doc.is_discarded()) throw ConfigError("", "config file '" + args.config_path + "' is not valid JSON");
    apply_overrides(doc, args.overrides);
    if (args.optimizers) doc["optimizers"] = *args.optimizers;
    if (args.output_dir) doc["output_dir"] = *args.output_dir;
    Config cfg = parse_config(doc);
    cfg.experiment.threads = std::min(cfg.experiment.threads, thread_cap());
    return cfg;
}

/// A small rectangular table written either as CSV or as a JSON array of
/// row objects.
struct Table {
    using Cell = std::variant<std::string, double, std::uint64_t>;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

inline void write_table(const fs::path& path, const Table& t, OutputFormat fmt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    if (fmt == OutputFormat::Csv) {
        for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
        out << '\n';
        for (const auto& row : t.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c) out << ',';
                std::visit(
                    [&](const auto& v) {
                        using V = std::decay_t<decltype(v)>;
                        if constexpr (std::is_same_v<V, double>) out << format_double(v);
                        else out << v;
                    },
                    row[c]);
            }
            out << '\n';
        }
    } else {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& row : t.rows) {
            nlohmann::json obj = nlohmann::json::object();
            for (std::size_t c = 0; c < row.size(); ++c)
                std::visit([&](const auto& v) { obj[t.columns[c]] = v; }, row[c]);
            arr.push_back(std::move(obj));
        }
        out << arr.dump(1) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string extension(OutputFormat fmt) { return fmt == OutputFormat::Csv ? ".csv" : ".json"; }

inline Table curve_table(const std::vector<EpochMetrics>& epochs) {
    Table t{{"epoch", "train_loss", "train_acc", "test_loss", "test_acc"}, {}};
    for (const auto& e : epochs)
        t.rows.push_back({static_cast<std::uint64_t>(e.epoch), e.train_loss, e.train_acc, e.test_loss, e.test_acc});
    return t;
}

/// Pairs (baseline, trend variant) present in the optimizer list, by kind.
inline std::vector<std::pair<std::string, std::string>> comparison_pairs(const ExperimentSpec& spec) {
    auto first_of = [&](OptimizerKind k) -> std::optional<std::string> {
        for (const auto& o : spec.optimizers)
            if (o.hp.kind == k) return o.name;
        return std::nullopt;
    };
    std::vector<std::pair<std::string, std::string>> out;
    for (auto [base, trend] : {std::pair{OptimizerKind::Adam, OptimizerKind::AdamT},
                               std::pair{OptimizerKind::AMSGrad, OptimizerKind::AMSGradT}}) {
        const auto b = first_of(base), t = first_of(trend);
        if (b && t) out.emplace_back(*b, *t);
    }
    return out;
}

inline const RunRecord* find_record(const std::vector<RunRecord>& recs, const std::string& name, std::uint64_t seed) {
    for (const auto& r : recs)
        if (r.optimizer == name && r.seed == seed) return &r;
    return nullptr;
}

/// Writes every artifact of a finished experiment into `dir` and returns
/// the file names written, in order.
inline std::vector<std::string> write_run_outputs(const Config& cfg, const std::vector<RunRecord>& records,
                                                  const fs::path& dir) {
    const ExperimentSpec& spec = cfg.experiment;
    const std::string ext = extension(cfg.format);
    std::vector<std::string> files;
    auto emit = [&](const std::string& name, const Table& t) {
        write_table(dir / name, t, cfg.format);
        files.push_back(name);
    };

    for (const auto& r : records) emit(r.optimizer + "_seed" + std::to_string(r.seed) + ext, curve_table(r.epochs));

    // Baseline minus trend variant, per seed and averaged over seeds.
    static const Metric metrics[] = {Metric::TrainLoss, Metric::TrainAcc, Metric::TestLoss, Metric::TestAcc};
    for (const auto& [base, trend] : comparison_pairs(spec)) {
        const std::string stem = "diff_" + base + "_" + trend;
        std::vector<std::vector<std::vector<double>>> per_seed;  // seed -> metric -> epoch
        for (auto seed : spec.seeds) {
            const RunRecord* a = find_record(records, base, seed);
            const RunRecord* b = find_record(records, trend, seed);
            if (!a || !b || a->diverged || b->diverged) continue;
            const std::size_t n = std::min(a->epochs.size(), b->epochs.size());
            Table t{{"epoch", "train_loss", "train_acc", "test_loss", "test_acc"}, {}};
            std::vector<std::vector<double>> cols;
            for (auto m : metrics) {
                auto sa = metric_series(*a, m), sb = metric_series(*b, m);
                sa.resize(n);
                sb.resize(n);
                cols.push_back(loss_difference(sa, sb));
            }
            for (std::size_t e = 0; e < n; ++e)
                t.rows.push_back({static_cast<std::uint64_t>(e), cols[0][e], cols[1][e], cols[2][e], cols[3][e]});
            emit(stem + "_seed" + std::to_string(seed) + ext, t);
            per_seed.push_back(std::move(cols));
        }
        if (per_seed.empty()) continue;
        std::size_t n = per_seed.front().front().size();
        for (const auto& s : per_seed) n = std::min(n, s.front().size());
        Table mean{{"epoch", "train_loss", "train_acc", "test_loss", "test_acc", "seeds"}, {}};
        for (std::size_t e = 0; e < n; ++e) {
            std::vector<Table::Cell> row{static_cast<std::uint64_t>(e)};
            for (std::size_t m = 0; m < 4; ++m) {
                double sum = 0.0;
                for (const auto& s : per_seed) sum += s[m][e];
                row.emplace_back(sum / static_cast<double>(per_seed.size()));
            }
            row.emplace_back(static_cast<std::uint64_t>(per_seed.size()));
            mean.rows.push_back(std::move(row));
        }
        emit(stem + "_mean" + ext, mean);
    }

    if (spec.seeds.size() >= 2) {
        Table agg{{"optimizer", "metric", "mean", "std", "runs"}, {}};
        for (const auto& row : aggregate_runs(records))
            agg.rows.push_back({row.optimizer, std::string(to_string(row.metric)), row.mean, row.stddev,
                                static_cast<std::uint64_t>(row.runs)});
        emit("aggregate" + ext, agg);
    }

    if (spec.track_regret) {
        for (const auto& r : records) {
            const auto reg = compute_regret(r.step_losses, r.step_optimum_losses);
            Table t{{"step", "loss", "optimum_loss", "regret", "regret_over_sqrt_t"}, {}};
            for (std::size_t i = 0; i < reg.cumulative.size(); ++i)
                t.rows.push_back({static_cast<std::uint64_t>(i + 1), r.step_losses[i], r.step_optimum_losses[i],
                                  reg.cumulative[i], reg.normalized[i]});
            emit("regret_" + r.optimizer + "_seed" + std::to_string(r.seed) + ext, t);
        }
    }
    return files;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}

// ---------------------------------------------------------------------------
// run

inline int cmd_run(const CommandArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return guarded(err, [&] {
        const std::string text = read_text(args.config_path);
        const Config cfg = prepare_config(args, text);
        const ExperimentSpec& spec = cfg.experiment;

        const auto started = std::chrono::steady_clock::now();
        const auto records = run_experiment(spec);
        const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

        const fs::path dir = fs::path(cfg.output_dir) / spec.name;
        fs::create_directories(dir);
        auto files = write_run_outputs(cfg, records, dir);

        nlohmann::json manifest;
        manifest["name"] = spec.name;
        manifest["config_file"] = args.config_path;
        manifest["config_sha1"] = git_blob_sha1(text);
        manifest["overrides"] = args.overrides;
        if (args.optimizers) manifest["optimizer_override"] = *args.optimizers;
        manifest["seeds"] = spec.seeds;
        manifest["epochs"] = spec.epochs;
        manifest["threads"] = spec.threads;
        manifest["format"] = cfg.format == OutputFormat::Csv ? "csv" : "json";
        manifest["total_seconds"] = total;
        nlohmann::json runs = nlohmann::json::array();
        std::size_t diverged = 0;
        for (const auto& r : records) {
            char hash[17];
            std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.batch_hash));
            runs.push_back({{"optimizer", r.optimizer},
                            {"kind", std::string(to_string(r.kind))},
                            {"seed", r.seed},
                            {"wall_seconds", r.wall_seconds},
                            {"diverged", r.diverged},
                            {"diverged_at_step", r.diverged ? nlohmann::json(r.diverged_at_step) : nlohmann::json()},
                            {"stopped_early", r.stopped_early},
                            {"epochs_completed", r.epochs.empty() ? 0 : r.epochs.back().epoch},
                            {"batch_hash", hash}});
            diverged += r.diverged;
        }
        manifest["runs"] = runs;
        manifest["files"] = files;
        {
            std::ofstream m(dir / "manifest.json", std::ios::binary | std::ios::trunc);
            m << manifest.dump(2) << '\n';
            if (!m) throw std::runtime_error("cannot write manifest");
        }

        out << spec.name << ": " << records.size() << " runs in " << format_double(total).substr(0, 6) << " s -> "
            << dir.string() << '\n';
        for (const auto& o : spec.optimizers) {
            std::vector<double> finals;
            for (const auto& r : records)
                if (r.optimizer == o.name && !r.diverged) finals.push_back(r.epochs.back().train_loss);
            double mean = 0.0;
            for (double f : finals) mean += f;
            out << "  " << o.name << "  final train loss (mean of " << finals.size() << ") = "
                << (finals.empty() ? std::string("n/a") : format_double(mean / static_cast<double>(finals.size())))
                << '\n';
        }
        if (diverged) out << "  " << diverged << " run(s) diverged; see manifest.json\n";
        return kOk;
    });
}

// ---------------------------------------------------------------------------
// grid

struct GridResult {
    std::string optimizer;
    GridCell cell;
    double score = 0.0;  // mean final train loss; +inf when any seed diverged
    std::size_t diverged = 0;
    std::size_t runs = 0;
};

inline bool uses_damping(OptimizerKind k) { return k == OptimizerKind::AdamT || k == OptimizerKind::AMSGradT; }

/// Runs every (optimizer, cell) probe over all seeds. Optimizers without a
/// damping parameter are probed once per eta.
inline std::vector<GridResult> run_grid(const Config& cfg) {
    const ExperimentSpec& base = cfg.experiment;
    const auto cells = enumerate_grid(cfg.grid);
    ExperimentSpec spec = base;
    if (cfg.grid.epochs) spec.epochs = cfg.grid.epochs;
    spec.track_regret = false;
    spec.optimizers.clear();
    std::vector<GridResult> results;
    for (const auto& o : base.optimizers) {
        std::vector<double> seen_eta;
        for (const auto& cell : cells) {
            const bool damped = uses_damping(o.hp.kind);
            if (!damped) {
                if (std::find(seen_eta.begin(), seen_eta.end(), cell.eta) != seen_eta.end()) continue;
                seen_eta.push_back(cell.eta);
            }
            OptimizerSpec probe = o;
            probe.hp.eta = cell.eta;
            if (damped) {
                probe.hp.phi1 = cell.phi1;
                probe.hp.phi2 = cell.phi2;
            }
            try {
                probe.hp.validate();
            } catch (const InvalidArgument& e) {
                throw ConfigError("grid", o.name + ": " + e.what());
            }
            probe.name = o.name + "#" + std::to_string(results.size());
            spec.optimizers.push_back(probe);
            GridResult g;
            g.optimizer = o.name;
            g.cell = damped ? cell : GridCell{cell.eta, o.hp.phi1, o.hp.phi2};
            results.push_back(g);
        }
    }
    const auto records = run_experiment(spec);
    for (std::size_t i = 0; i < results.size(); ++i) {
        const std::string name = spec.optimizers[i].name;
        double sum = 0.0;
        for (const auto& r : records) {
            if (r.optimizer != name) continue;
            ++results[i].runs;
            if (r.diverged) ++results[i].diverged;
            else sum += r.epochs.back().train_loss;
        }
        results[i].score = results[i].diverged ? std::numeric_limits<double>::infinity()
                                               : sum / static_cast<double>(results[i].runs);
    }
    return results;
}

/// Lowest score per optimizer; ties go to the smaller eta, then to the
/// earlier cell.
inline std::vector<GridResult> best_cells(const std::vector<GridResult>& results) {
    std::vector<GridResult> best;
    for (const auto& r : results) {
        auto it = std::find_if(best.begin(), best.end(), [&](const GridResult& b) { return b.optimizer == r.optimizer; });
        if (it == best.end()) best.push_back(r);
        else if (r.score < it->score || (r.score == it->score && r.cell.eta < it->cell.eta)) *it = r;
    }
    return best;
}

inline int cmd_grid(const CommandArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return guarded(err, [&] {
        const std::string text = read_text(args.config_path);
        const Config cfg = prepare_config(args, text);
        const auto results = run_grid(cfg);
        const auto best = best_cells(results);

        const fs::path dir = fs::path(cfg.output_dir) / cfg.experiment.name;
        fs::create_directories(dir);
        const std::string ext = extension(cfg.format);
        auto table = [](const std::vector<GridResult>& rows) {
            Table t{{"optimizer", "eta", "phi1", "phi2", "mean_final_train_loss", "diverged", "runs"}, {}};
            for (const auto& r : rows)
                t.rows.push_back({r.optimizer, r.cell.eta, r.cell.phi1, r.cell.phi2, r.score,
                                  static_cast<std::uint64_t>(r.diverged), static_cast<std::uint64_t>(r.runs)});
            return t;
        };
        write_table(dir / ("grid" + ext), table(results), cfg.format);
        write_table(dir / ("grid_best" + ext), table(best), cfg.format);

        out << cfg.experiment.name << ": " << results.size() << " grid probes -> " << dir.string() << '\n';
        for (const auto& b : best) {
            out << "  best " << b.optimizer << ": eta=" << b.cell.eta;
            if (uses_damping(std::find_if(cfg.experiment.optimizers.begin(), cfg.experiment.optimizers.end(),
                                          [&](const OptimizerSpec& o) { return o.name == b.optimizer; })
                                 ->hp.kind))
                out << " phi1=" << b.cell.phi1 << " phi2=" << b.cell.phi2;
            out << " final train loss=" << format_double(b.score) << '\n';
        }
        return kOk;
    });
}

// ---------------------------------------------------------------------------
// verify

inline int cmd_verify(const verify::SuiteOptions& opt, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
    return guarded(err, [&] {
        std::size_t failed = 0;
        verify::run_suite(opt, [&](const verify::CheckResult& r) {
            out << verify::format_result(r) << std::endl;
            failed += !r.passed;
        });
        if (failed) {
            out << failed << " propert" << (failed == 1 ? "y" : "ies") << " failed\n";
            return static_cast<int>(kRuntimeError);
        }
        out << "all properties passed\n";
        return static_cast<int>(kOk);
    });
}

}  // namespace trendopt::cli
