// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <set>

#include <fmt/chrono.h>
#include <fmt/core.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "specsurg/cli.hpp"
#include "specsurg/error.hpp"
#include "specsurg/penalty.hpp"
#include "specsurg/spectral.hpp"
#include "specsurg/tensor_store.hpp"
#include "specsurg/version.hpp"

namespace specsurg::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void require_file(const fs::path& p, std::string_view what) {
    if (p.empty()) throw ValidationError(fmt::format("missing {} path", what));
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) throw ValidationError(fmt::format("{} '{}' does not exist", what, p.string()));
}

void require_out(const fs::path& p) {
    if (p.empty()) throw ValidationError("missing output directory");
    std::error_code ec;
    if (fs::exists(p, ec) && !fs::is_directory(p, ec)) {
        throw ValidationError(fmt::format("output path '{}' exists and is not a directory", p.string()));
    }
}

void make_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw IoError(fmt::format("cannot create directory '{}': {}", p.string(), ec.message()));
}

void write_text(const fs::path& p, const std::string& text) {
    make_dir(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write '{}'", p.string()));
    out << text;
    out.close();
    if (!out) throw IoError(fmt::format("write to '{}' failed", p.string()));
}

std::string json_text(const ordered_json& j) { return j.dump(2) + "\n"; }

ordered_json header(std::string_view command, const CommonOptions& o) {
    ordered_json j;
    j["tool"] = "specsurg";
    j["version"] = std::string(kVersion);
    j["command"] = std::string(command);
    if (o.stamp) {
        j["generated_at"] = fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                                        std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
    }
    return j;
}

std::string num(double x) { return fmt::format("{}", x); }

std::string file_token(const std::string& tensor) {
    std::string s = tensor;
    for (char& c : s) {
        if (c == '/' || c == '\\' || c == ':') c = '_';
    }
    return s;
}

double degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

// ---------------------------------------------------------------------------
// Matrix pairs selected from two checkpoints

struct PairItem {
    store::MatrixKey key;
    std::string tensor;
};

struct PairContext {
    store::Checkpoint a;
    store::Checkpoint b;
    store::NamingProfile profile;
    std::vector<PairItem> items; // key order
};

PairContext prepare_pair(const PairSelection& sel, std::string_view name_a, std::string_view name_b) {
    require_file(sel.a, name_a);
    require_file(sel.b, name_b);
    const auto layers = surgery::LayerSelection::parse(sel.layers);
    const auto kinds = surgery::parse_kinds(sel.kinds);
    PairContext ctx{store::open_checkpoint(sel.a), store::open_checkpoint(sel.b), store::resolve_profile(sel.profile),
                    {}};
    const auto res = store::resolve_keys(ctx.a, ctx.profile);
    std::set<std::uint32_t> present;
    for (const auto& r : res.matched) present.insert(r.key.layer);
    const auto chosen = layers.resolve(present);
    for (const auto& r : res.matched) {
        if (!chosen.contains(r.key.layer) || !kinds.contains(r.key.kind)) continue;
        if (!ctx.b.contains(r.tensor)) {
            throw ValidationError(fmt::format("'{}' is missing from {} '{}'", r.tensor, name_b, sel.b.string()));
        }
        const auto& ia = ctx.a.info(r.tensor);
        const auto& ib = ctx.b.info(r.tensor);
        if (ia.shape != ib.shape) {
            throw ValidationError(fmt::format("'{}' has shape [{}] in {} but [{}] in {}", r.tensor,
                                              fmt::join(ia.shape, ","), name_a, fmt::join(ib.shape, ","), name_b));
        }
        ctx.items.push_back({r.key, r.tensor});
    }
    if (ctx.items.empty()) {
        throw ValidationError(fmt::format("no matrices selected (profile '{}', layers '{}', kinds '{}')",
                                          ctx.profile.name, sel.layers, sel.kinds));
    }
    return ctx;
}

ordered_json pair_inputs(const PairSelection& sel, const PairContext& ctx, std::string_view name_a,
                         std::string_view name_b) {
    ordered_json j;
    j[std::string(name_a)] = sel.a.string();
    j[std::string(name_b)] = sel.b.string();
    j["profile"] = ctx.profile.name;
    j["layers"] = sel.layers;
    j["kinds"] = sel.kinds;
    return j;
}

Matrix select_columns(const Matrix& m, const std::vector<std::size_t>& cols) {
    Matrix out(m.rows(), cols.size());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t k = 0; k < cols.size(); ++k) out(i, k) = m(i, cols[k]);
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------------------

std::vector<std::string> expand_braces(const std::string& text) {
    const auto open = text.find('{');
    if (open == std::string::npos) {
        if (text.find('}') != std::string::npos) throw ValidationError(fmt::format("unbalanced brace in '{}'", text));
        return {text};
    }
    const auto close = text.find('}', open);
    if (close == std::string::npos) throw ValidationError(fmt::format("unbalanced brace in '{}'", text));
    const std::string prefix = text.substr(0, open);
    const std::string body = text.substr(open + 1, close - open - 1);
    const std::string suffix = text.substr(close + 1);
    if (suffix.find_first_of("{}") != std::string::npos) {
        throw ValidationError(fmt::format("only one brace group is supported in '{}'", text));
    }
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = body.find(',', start);
        const std::string item = body.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (item.empty()) throw ValidationError(fmt::format("empty alternative in '{}'", text));
        out.push_back(prefix + item + suffix);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string slug(const std::string& text) {
    std::string s;
    for (char c : text) {
        if (c == ':') continue;
        s.push_back(c == ',' ? '-' : c);
    }
    return s;
}

// ---------------------------------------------------------------------------
// svd-diff

int run_svd_diff(const SvdDiffParams& p, const CommonOptions& o, std::ostream& out) {
    require_out(p.out);
    const auto ctx = prepare_pair(p.pair, "a", "b");

    struct Row {
        const PairItem* item;
        std::size_t rows, cols;
        spectral::DeltaSpectrum d;
    };
    std::vector<Row> rows;
    for (const auto& it : ctx.items) {
        const Matrix a = store::load_matrix(ctx.a, it.tensor);
        const Matrix b = store::load_matrix(ctx.b, it.tensor);
        rows.push_back({&it, a.rows(), a.cols(), spectral::delta_sigma(a, b)});
    }

    ordered_json j = header("svd-diff", o);
    j["inputs"] = pair_inputs(p.pair, ctx, "a", "b");
    ordered_json mats = ordered_json::array();
    std::map<std::string, std::pair<double, double>> by_kind; // max|delta|, max drift
    double overall_max = 0.0, overall_drift = 0.0;
    for (const auto& r : rows) {
        ordered_json m;
        m["tensor"] = r.item->tensor;
        m["key"] = r.item->key.label();
        m["shape"] = {r.rows, r.cols};
        m["rank"] = r.d.delta.size();
        m["sigma_1_a"] = r.d.sigma_a.front();
        m["sigma_1_b"] = r.d.sigma_b.front();
        m["max_abs_delta"] = r.d.max_abs_delta;
        m["mean_delta"] = r.d.mean_delta;
        m["relative_drift"] = r.d.relative_drift;
        m["csv"] = "delta_sigma/" + file_token(r.item->tensor) + ".csv";
        mats.push_back(std::move(m));
        auto& k = by_kind[std::string(store::to_string(r.item->key.kind))];
        k.first = std::max(k.first, r.d.max_abs_delta);
        k.second = std::max(k.second, r.d.relative_drift);
        overall_max = std::max(overall_max, r.d.max_abs_delta);
        overall_drift = std::max(overall_drift, r.d.relative_drift);
    }
    j["matrices"] = std::move(mats);
    ordered_json kinds;
    for (const auto& [k, v] : by_kind) kinds[k] = {{"max_abs_delta", v.first}, {"max_relative_drift", v.second}};
    j["summary"] = {{"matrix_count", rows.size()},
                    {"max_abs_delta", overall_max},
                    {"max_relative_drift", overall_drift},
                    {"by_kind", kinds}};

    make_dir(p.out);
    for (const auto& r : rows) {
        std::string csv = "rank,sigma_a,sigma_b,delta\n";
        for (std::size_t i = 0; i < r.d.delta.size(); ++i) {
            csv += fmt::format("{},{},{},{}\n", i, num(r.d.sigma_a[i]), num(r.d.sigma_b[i]), num(r.d.delta[i]));
        }
        write_text(p.out / "delta_sigma" / (file_token(r.item->tensor) + ".csv"), csv);
    }
    if (o.emit_plot_data) {
        std::string csv = "key,tensor,rank,delta\n";
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.d.delta.size(); ++i) {
                csv += fmt::format("{},{},{},{}\n", r.item->key.label(), r.item->tensor, i, num(r.d.delta[i]));
            }
        }
        write_text(p.out / "plot" / "delta_sigma_series.csv", csv);
    }
    write_text(p.out / "svd_diff.json", json_text(j));
    out << fmt::format("svd-diff: {} matrices, max |delta sigma| = {:.6g}\n", rows.size(), overall_max);
    return kOk;
}

// ---------------------------------------------------------------------------
// angles

int run_angles(const AnglesParams& p, const CommonOptions& o, std::ostream& out) {
    require_out(p.out);
    std::vector<spectral::Side> sides;
    if (p.side == "left" || p.side == "both") sides.push_back(spectral::Side::Left);
    if (p.side == "right" || p.side == "both") sides.push_back(spectral::Side::Right);
    if (sides.empty()) throw ValidationError(fmt::format("unknown side '{}' (left, right or both)", p.side));
    if (p.ranks.empty()) throw ValidationError("angles: empty rank schedule");
    std::vector<surgery::RankSelection> ranks;
    for (const auto& r : p.ranks) ranks.push_back(surgery::RankSelection::parse(r));
    const auto ctx = prepare_pair(p.pair, "a", "b");

    std::vector<spectral::SvdTriple> ta, tb;
    for (const auto& it : ctx.items) {
        ta.push_back(spectral::svd(store::load_matrix(ctx.a, it.tensor)));
        tb.push_back(spectral::svd(store::load_matrix(ctx.b, it.tensor)));
    }

    struct Entry {
        const PairItem* item;
        spectral::AngleSpectrum spec;
    };
    struct Point {
        fs::path dir;
        std::string ranks;
        std::vector<Entry> entries;
    };
    std::vector<Point> points;
    for (std::size_t g = 0; g < ranks.size(); ++g) {
        Point pt;
        pt.ranks = ranks[g].to_string();
        pt.dir = ranks.size() == 1 ? p.out : p.out / ("ranks-" + slug(pt.ranks));
        for (std::size_t i = 0; i < ctx.items.size(); ++i) {
            const auto cols = ranks[g].resolve(ta[i].rank());
            if (cols.empty()) {
                throw ValidationError(fmt::format("rank selection '{}' selects nothing for '{}'", pt.ranks,
                                                  ctx.items[i].tensor));
            }
            for (auto side : sides) {
                const Matrix& qa = side == spectral::Side::Left ? ta[i].u : ta[i].v;
                const Matrix& qb = side == spectral::Side::Left ? tb[i].u : tb[i].v;
                pt.entries.push_back(
                    {&ctx.items[i], spectral::principal_angles(select_columns(qa, cols), select_columns(qb, cols), side)});
            }
        }
        points.push_back(std::move(pt));
    }

    double worst = 0.0;
    for (const auto& pt : points) {
        ordered_json j = header("angles", o);
        j["inputs"] = pair_inputs(p.pair, ctx, "a", "b");
        j["inputs"]["ranks"] = pt.ranks;
        j["inputs"]["side"] = p.side;
        ordered_json mats = ordered_json::array();
        double pt_max = 0.0;
        for (const auto& e : pt.entries) {
            const auto& a = e.spec.angles;
            double mean = 0.0;
            for (double x : a) mean += x;
            mean /= static_cast<double>(a.size());
            const std::string side(spectral::to_string(e.spec.side));
            ordered_json m;
            m["tensor"] = e.item->tensor;
            m["key"] = e.item->key.label();
            m["side"] = side;
            m["count"] = a.size();
            m["min_angle_deg"] = degrees(e.spec.min_angle());
            m["max_angle_deg"] = degrees(e.spec.max_angle());
            m["mean_angle_deg"] = degrees(mean);
            m["csv"] = "angles/" + file_token(e.item->tensor) + "." + side + ".csv";
            mats.push_back(std::move(m));
            pt_max = std::max(pt_max, e.spec.max_angle());
        }
        j["matrices"] = std::move(mats);
        j["summary"] = {{"entries", pt.entries.size()}, {"max_angle_deg", degrees(pt_max)}};
        worst = std::max(worst, pt_max);

        make_dir(pt.dir);
        std::string series = "key,tensor,side,index,angle_deg\n";
        for (const auto& e : pt.entries) {
            const std::string side(spectral::to_string(e.spec.side));
            std::string csv = "index,cosine,angle_rad,angle_deg\n";
            for (std::size_t i = 0; i < e.spec.angles.size(); ++i) {
                csv += fmt::format("{},{},{},{}\n", i, num(e.spec.cosines[i]), num(e.spec.angles[i]),
                                   num(degrees(e.spec.angles[i])));
                series += fmt::format("{},{},{},{},{}\n", e.item->key.label(), e.item->tensor, side, i,
                                      num(degrees(e.spec.angles[i])));
            }
            write_text(pt.dir / "angles" / (file_token(e.item->tensor) + "." + side + ".csv"), csv);
        }
        if (o.emit_plot_data) write_text(pt.dir / "plot" / "angle_series.csv", series);
        write_text(pt.dir / "angles.json", json_text(j));
    }
    out << fmt::format("angles: {} matrices, {} rank selection(s), max angle = {:.6g} deg\n", ctx.items.size(),
                       points.size(), degrees(worst));
    return kOk;
}

// ---------------------------------------------------------------------------
// restore

int run_restore(const RestoreParams& p, const CommonOptions& o, std::ostream& out) {
    require_out(p.out);
    require_file(p.donor, "donor");
    require_file(p.host, "host");
    if (p.layers.empty() || p.ranks.empty()) throw ValidationError("restore: empty layer or rank schedule");

    surgery::SurgeryPlan base;
    base.mode = surgery::parse_mode(p.mode);
    base.donor = p.donor;
    base.host = p.host;
    base.profile = store::resolve_profile(p.profile);
    base.selection.kinds = surgery::parse_kinds(p.kinds);
    base.align = surgery::parse_alignment(p.align);
    base.write.force_f32 = p.force_f32;

    struct Point {
        surgery::SurgeryPlan plan;
        fs::path dir;
    };
    std::vector<Point> grid;
    const bool single = p.layers.size() == 1 && p.ranks.size() == 1;
    std::set<fs::path> seen;
    for (const auto& l : p.layers) {
        for (const auto& r : p.ranks) {
            Point pt{base, {}};
            pt.plan.selection.layers = surgery::LayerSelection::parse(l);
            pt.plan.selection.ranks = surgery::RankSelection::parse(r);
            pt.dir = single ? p.out
                            : p.out / fmt::format("{}_layers-{}_ranks-{}", surgery::to_string(base.mode),
                                                  slug(pt.plan.selection.layers.to_string()),
                                                  slug(pt.plan.selection.ranks.to_string()));
            if (!seen.insert(pt.dir).second) {
                throw ValidationError(fmt::format("restore: grid point '{}' appears twice", pt.dir.filename().string()));
            }
            grid.push_back(std::move(pt));
        }
    }
    for (const auto& pt : grid) surgery::validate_plan(pt.plan);

    for (const auto& pt : grid) {
        make_dir(pt.dir);
        const auto report = surgery::run_surgery(pt.plan, pt.dir / "model.safetensors");

        ordered_json j = header("restore", o);
        j["inputs"] = {{"mode", std::string(surgery::to_string(pt.plan.mode))},
                       {"donor", p.donor.string()},
                       {"host", p.host.string()},
                       {"profile", pt.plan.profile.name},
                       {"layers", pt.plan.selection.layers.to_string()},
                       {"ranks", pt.plan.selection.ranks.to_string()},
                       {"kinds", surgery::kinds_to_string(pt.plan.selection.kinds)},
                       {"align", p.align},
                       {"force_f32", p.force_f32}};
        j["output"] = "model.safetensors";
        ordered_json edited = ordered_json::array();
        ordered_json copied = ordered_json::array();
        std::string csv = "tensor,key,status,ranks_touched,frob_vs_host,frob_vs_donor,max_entry_change,"
                          "max_rounding_error,degenerate_host,degenerate_donor\n";
        std::size_t flagged = 0;
        for (const auto& rec : report.records) {
            csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", rec.tensor, rec.key, rec.status, rec.ranks_touched,
                               num(rec.frob_vs_host), num(rec.frob_vs_donor), num(rec.max_entry_change),
                               num(rec.max_rounding_error), fmt::join(rec.degenerate_host, ";"),
                               fmt::join(rec.degenerate_donor, ";"));
            if (rec.status != "edited") {
                copied.push_back(rec.tensor);
                continue;
            }
            if (!rec.degenerate_host.empty() || !rec.degenerate_donor.empty()) ++flagged;
            edited.push_back({{"tensor", rec.tensor},
                              {"key", rec.key},
                              {"ranks_touched", rec.ranks_touched},
                              {"frob_vs_host", rec.frob_vs_host},
                              {"frob_vs_donor", rec.frob_vs_donor},
                              {"max_entry_change", rec.max_entry_change},
                              {"max_rounding_error", rec.max_rounding_error},
                              {"degenerate_host", rec.degenerate_host},
                              {"degenerate_donor", rec.degenerate_donor}});
        }
        j["summary"] = {{"edited", edited.size()}, {"copied", copied.size()}, {"degenerate_flagged", flagged}};
        j["edited"] = std::move(edited);
        j["copied"] = std::move(copied);
        write_text(pt.dir / "report.json", json_text(j));
        write_text(pt.dir / "report.csv", csv);
        out << fmt::format("restore: {} edited, {} copied -> {}\n", report.edited_count(),
                           report.records.size() - report.edited_count(), (pt.dir / "model.safetensors").string());
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// adv-stats

int run_adv_stats(const AdvStatsParams& p, const CommonOptions& o, std::ostream& out) {
    require_file(p.input, "input");
    if (p.out) require_out(*p.out);
    if (p.granularity != "token" && p.granularity != "step" && p.granularity != "unspecified") {
        throw ValidationError(fmt::format("unknown granularity '{}' (token, step or unspecified)", p.granularity));
    }
    advantage::EstimatorConfig cfg;
    cfg.min_samples = p.min_samples;
    if (p.bins != "fd") {
        std::size_t pos = 0;
        long long bins = 0;
        try {
            bins = std::stoll(p.bins, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != p.bins.size() || bins <= 0) {
            throw ValidationError(fmt::format("--bins must be 'fd' or a positive integer, got '{}'", p.bins));
        }
        cfg.fixed_bins = static_cast<std::size_t>(bins);
    }
    if (p.kl_direction == "empirical") {
        cfg.kl_direction = advantage::KlDirection::EmpiricalToNormal;
    } else if (p.kl_direction == "normal") {
        cfg.kl_direction = advantage::KlDirection::NormalToEmpirical;
    } else {
        throw ValidationError(fmt::format("unknown KL direction '{}' (empirical or normal)", p.kl_direction));
    }
    if (!(p.gamma >= 0.0 && p.gamma <= 1.0) || !(p.lambda >= 0.0 && p.lambda <= 1.0)) {
        throw ValidationError("gamma and lambda must lie in [0, 1]");
    }
    if (p.modes == 0) throw ValidationError("mode budget must be at least 1");
    cfg.silverman.bootstrap = p.bootstrap;
    cfg.silverman.seed = p.seed;
    cfg.silverman.mode_budget = p.modes;
    cfg.silverman.threads = p.threads;
    if (p.bootstrap < cfg.silverman.min_bootstrap) {
        throw ValidationError(
            fmt::format("bootstrap count {} below the minimum {}", p.bootstrap, cfg.silverman.min_bootstrap));
    }
    advantage::Thresholds thresholds;
    if (p.thresholds != "default") {
        require_file(p.thresholds, "thresholds file");
        thresholds = advantage::load_thresholds(p.thresholds);
    }

    const auto log = advantage::read_rollouts(p.input);
    const auto samples = advantage::advantage_samples(log, {p.gamma, p.lambda});
    const auto s = advantage::summarize(samples, cfg);
    const auto v = advantage::verdict(s, thresholds);
    const auto& h = s.histogram;

    ordered_json j = header("adv-stats", o);
    j["inputs"] = {{"input", p.input.string()},
                   {"granularity", p.granularity},
                   {"source", log.has_traces() ? "traces" : "advantages"}};
    if (log.has_traces()) {
        j["inputs"]["gamma"] = p.gamma;
        j["inputs"]["lambda"] = p.lambda;
        j["inputs"]["traces"] = log.traces.size();
    }
    j["n"] = s.n;
    j["mu"] = s.mu;
    j["sd"] = s.sd;
    j["skewness"] = s.skewness;
    j["entropy_nats"] = s.entropy_nats;
    j["kl_vs_matched_normal"] = std::max(0.0, s.kl_vs_matched_normal);
    j["kl_direction"] = p.kl_direction;
    j["histogram"] = {{"rule", h.freedman_diaconis ? "freedman-diaconis" : "fixed"},
                      {"bins", h.bins()},
                      {"origin", h.origin},
                      {"width", h.width}};
    j["silverman"] = {{"p_value", s.silverman_p},
                      {"critical_bandwidth", s.critical_bandwidth},
                      {"mode_budget", p.modes},
                      {"bootstrap", p.bootstrap},
                      {"seed", p.seed},
                      {"seed_rule", "replicate b uses mt19937_64(splitmix64(seed ^ splitmix64(b)))"}};
    j["thresholds"] = {{"max_center_ratio", thresholds.max_center_ratio},
                       {"min_entropy", thresholds.min_entropy},
                       {"max_kl", thresholds.max_kl}};
    ordered_json checks = ordered_json::array();
    for (const auto& c : v.checks) {
        checks.push_back({{"name", c.name},
                          {"comparison", c.comparison},
                          {"value", c.value},
                          {"threshold", c.threshold},
                          {"passed", c.passed}});
    }
    j["checks"] = std::move(checks);
    j["verdict"] = std::string(advantage::to_string(v.verdict));

    if (!p.out) {
        out << json_text(j);
        return kOk;
    }
    make_dir(*p.out);
    const double n = static_cast<double>(h.total);
    std::string csv = "bin,left,right,count,density,normal_density\n";
    for (std::size_t i = 0; i < h.bins(); ++i) {
        const double a = h.edge(i), b = h.edge(i + 1);
        csv += fmt::format("{},{},{},{},{},{}\n", i, num(a), num(b), h.counts[i],
                           num(static_cast<double>(h.counts[i]) / (n * h.width)),
                           num(advantage::normal_mass(a, b, s.mu, s.sd) / h.width));
    }
    write_text(*p.out / "histogram.csv", csv);
    if (o.emit_plot_data) {
        std::string line = "x,normal_pdf\n";
        const double lo = h.origin, hi = h.edge(h.bins());
        constexpr int kPoints = 401;
        for (int i = 0; i < kPoints; ++i) {
            const double x = lo + (hi - lo) * i / (kPoints - 1);
            const double z = (x - s.mu) / s.sd;
            line += fmt::format("{},{}\n", num(x), num(std::exp(-0.5 * z * z) / (s.sd * std::sqrt(2.0 * std::numbers::pi))));
        }
        write_text(*p.out / "plot" / "matched_normal.csv", line);
    }
    write_text(*p.out / "adv_summary.json", json_text(j));
    out << fmt::format("adv-stats: n = {}, verdict {}\n", s.n, advantage::to_string(v.verdict));
    return kOk;
}

// ---------------------------------------------------------------------------
// penalty

int run_penalty(const PenaltyParams& p, const CommonOptions& o, std::ostream& out) {
    if (p.out) require_out(*p.out);
    if (p.ranks.empty()) throw ValidationError("penalty: empty rank schedule");
    for (auto r : p.ranks) {
        if (r == 0) throw ValidationError("penalty rank must be positive");
    }
    const PairSelection sel{p.ref, p.current, p.profile, p.layers, p.kinds};
    const auto ctx = prepare_pair(sel, "ref", "current");

    struct Row {
        const PairItem* item;
        std::size_t requested;
        std::size_t rank;
        double value;
        double relative;
        double gap;
        bool degenerate;
    };
    std::vector<Row> rows;
    for (const auto& it : ctx.items) {
        const auto t = spectral::svd(store::load_matrix(ctx.a, it.tensor));
        const Matrix w = store::load_matrix(ctx.b, it.tensor);
        const double norm2 = std::pow(frobenius_norm(w), 2);
        for (auto r : p.ranks) {
            const auto ref = penalty::fit_reference(t, r);
            const double val = penalty::penalty_value(w, ref);
            rows.push_back({&it, r, ref.rank, val, norm2 > 0.0 ? val / norm2 : 0.0, ref.boundary_gap,
                            ref.degenerate_boundary()});
        }
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return std::tie(a.requested, a.item->key) < std::tie(b.requested, b.item->key);
    });

    std::string csv = "tensor,key,kind,layer,requested_rank,rank,penalty,relative_penalty,boundary_gap,"
                      "degenerate_boundary\n";
    for (const auto& r : rows) {
        csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.item->tensor, r.item->key.label(),
                           store::to_string(r.item->key.kind), r.item->key.layer, r.requested, r.rank, num(r.value),
                           num(r.relative), num(r.gap), r.degenerate ? "true" : "false");
    }
    if (!p.out) {
        out << csv;
        return kOk;
    }

    ordered_json j = header("penalty", o);
    j["inputs"] = pair_inputs(sel, ctx, "ref", "current");
    j["inputs"]["ranks"] = p.ranks;
    ordered_json per_rank = ordered_json::array();
    for (auto requested : p.ranks) {
        std::map<std::string, std::tuple<std::size_t, double, double>> kinds; // count, total, max
        double total = 0.0;
        std::size_t flagged = 0;
        for (const auto& r : rows) {
            if (r.requested != requested) continue;
            auto& [c, t, m] = kinds[std::string(store::to_string(r.item->key.kind))];
            ++c;
            t += r.value;
            m = std::max(m, r.value);
            total += r.value;
            if (r.degenerate) ++flagged;
        }
        ordered_json by_kind;
        for (const auto& [k, v] : kinds) {
            const auto& [c, t, m] = v;
            by_kind[k] = {{"matrices", c}, {"total", t}, {"mean", t / static_cast<double>(c)}, {"max", m}};
        }
        per_rank.push_back(
            {{"rank", requested}, {"total", total}, {"degenerate_flagged", flagged}, {"by_kind", by_kind}});
    }
    j["aggregate"] = std::move(per_rank);
    j["table"] = "penalty.csv";
    make_dir(*p.out);
    write_text(*p.out / "penalty.csv", csv);
    write_text(*p.out / "penalty_summary.json", json_text(j));
    out << fmt::format("penalty: {} rows -> {}\n", rows.size(), (*p.out / "penalty.csv").string());
    return kOk;
}

} // namespace specsurg::cli
