// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "specsurg/cli.hpp"
#include "specsurg/error.hpp"
#include "specsurg/kernels.hpp"
#include "specsurg/spectral.hpp"
#include "specsurg/version.hpp"

namespace specsurg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> expand_all(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const auto& s : items) {
        for (auto& e : expand_braces(s)) out.push_back(std::move(e));
    }
    return out;
}

std::vector<std::size_t> parse_ranks(const std::vector<std::string>& items) {
    std::vector<std::size_t> out;
    for (const auto& s : expand_all(items)) {
        std::size_t pos = 0;
        long long v = 0;
        try {
            v = std::stoll(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != s.size() || v <= 0) throw ValidationError(fmt::format("rank must be a positive integer, got '{}'", s));
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manifest reading

class ManifestReader {
public:
    ManifestReader(const json& obj, std::string where, fs::path base)
        : obj_(obj), where_(std::move(where)), base_(std::move(base)) {
        if (!obj_.is_object()) throw ValidationError(fmt::format("manifest: '{}' must be an object", where_));
    }

    template <class T>
    void get(const char* key, T& out) {
        used_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ValidationError(fmt::format("manifest: '{}.{}' has the wrong type", where_, key));
        }
    }

    void path(const char* key, fs::path& out) {
        std::string s;
        get(key, s);
        if (!s.empty()) out = resolve(s);
    }

    fs::path resolve(const std::string& s) const {
        const fs::path p(s);
        return p.is_absolute() ? p : base_ / p;
    }

    // String or array of strings.
    void list(const char* key, std::vector<std::string>& out) {
        used_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        if (it->is_string()) {
            out = {it->get<std::string>()};
        } else if (it->is_array() && std::all_of(it->begin(), it->end(), [](const json& e) { return e.is_string(); })) {
            out = it->get<std::vector<std::string>>();
        } else {
            throw ValidationError(fmt::format("manifest: '{}.{}' must be a string or a list of strings", where_, key));
        }
        out = expand_all(out);
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!used_.contains(it.key())) {
                throw ValidationError(fmt::format("manifest: unknown field '{}.{}'", where_, it.key()));
            }
        }
    }

    bool has(const char* key) const { return obj_.contains(key); }
    void mark(const char* key) { used_.insert(key); }

private:
    const json& obj_;
    std::string where_;
    fs::path base_;
    std::set<std::string> used_;
};

void read_pair(ManifestReader& in, PairSelection& p, const char* a, const char* b) {
    in.path(a, p.a);
    in.path(b, p.b);
    in.get("profile", p.profile);
    in.get("layers", p.layers);
    in.get("kinds", p.kinds);
}

} // namespace

int run_manifest(const fs::path& manifest, const CommonOptions& o, std::ostream& out) {
    std::ifstream f(manifest);
    if (!f) {
        std::error_code ec;
        if (!fs::exists(manifest, ec)) throw ValidationError(fmt::format("manifest '{}' does not exist", manifest.string()));
        throw IoError(fmt::format("cannot open manifest '{}'", manifest.string()));
    }
    json root;
    try {
        root = json::parse(f);
    } catch (const json::exception& e) {
        throw ValidationError(fmt::format("manifest '{}' is not valid JSON: {}", manifest.string(), e.what()));
    }
    const fs::path base = manifest.parent_path();
    ManifestReader top(root, "manifest", base);
    std::string command;
    top.get("command", command);
    std::string output_dir;
    top.get("output_dir", output_dir);
    std::uint64_t seed = 7;
    top.get("seed", seed);
    const json empty = json::object();
    const json& inputs_j = root.contains("inputs") ? root["inputs"] : empty;
    const json& sweep_j = root.contains("sweep") ? root["sweep"] : empty;
    top.mark("inputs");
    top.mark("sweep");
    top.finish();
    if (command.empty()) throw ValidationError("manifest: missing 'command'");
    ManifestReader in(inputs_j, "inputs", base);
    ManifestReader sweep(sweep_j, "sweep", base);
    const auto out_dir = [&] {
        if (output_dir.empty()) throw ValidationError("manifest: missing 'output_dir'");
        return top.resolve(output_dir);
    };

    if (command == "svd-diff") {
        SvdDiffParams p;
        read_pair(in, p.pair, "a", "b");
        in.finish();
        sweep.finish();
        p.out = out_dir();
        return run_svd_diff(p, o, out);
    }
    if (command == "angles") {
        AnglesParams p;
        read_pair(in, p.pair, "a", "b");
        in.get("side", p.side);
        in.list("ranks", p.ranks);
        sweep.list("ranks", p.ranks);
        in.finish();
        sweep.finish();
        p.out = out_dir();
        return run_angles(p, o, out);
    }
    if (command == "restore") {
        RestoreParams p;
        in.get("mode", p.mode);
        in.path("donor", p.donor);
        in.path("host", p.host);
        in.get("profile", p.profile);
        in.get("kinds", p.kinds);
        in.get("align", p.align);
        in.get("force_f32", p.force_f32);
        in.list("layers", p.layers);
        in.list("ranks", p.ranks);
        sweep.list("layers", p.layers);
        sweep.list("ranks", p.ranks);
        in.finish();
        sweep.finish();
        p.out = out_dir();
        return run_restore(p, o, out);
    }
    if (command == "adv-stats") {
        AdvStatsParams p;
        p.seed = seed;
        in.path("input", p.input);
        std::string thresholds;
        in.get("thresholds", thresholds);
        if (!thresholds.empty()) p.thresholds = thresholds == "default" ? thresholds : in.resolve(thresholds).string();
        if (in.has("bins")) {
            json bins;
            in.get("bins", bins);
            p.bins = bins.is_string() ? bins.get<std::string>() : bins.dump();
        }
        in.get("bootstrap", p.bootstrap);
        in.get("modes", p.modes);
        in.get("kl_direction", p.kl_direction);
        in.get("min_samples", p.min_samples);
        in.get("gamma", p.gamma);
        in.get("lambda", p.lambda);
        in.get("granularity", p.granularity);
        in.get("threads", p.threads);
        in.finish();
        sweep.finish();
        p.out = out_dir();
        return run_adv_stats(p, o, out);
    }
    if (command == "penalty") {
        PenaltyParams p;
        PairSelection pair;
        read_pair(in, pair, "ref", "current");
        p.ref = pair.a;
        p.current = pair.b;
        p.profile = pair.profile;
        p.layers = pair.layers;
        p.kinds = pair.kinds;
        for (auto* src : {&in, &sweep}) {
            if (!src->has("ranks") && !src->has("rank")) continue;
            json r;
            src->get(src->has("ranks") ? "ranks" : "rank", r);
            std::vector<std::string> items;
            if (r.is_array()) {
                for (const auto& e : r) items.push_back(e.is_string() ? e.get<std::string>() : e.dump());
            } else {
                items.push_back(r.is_string() ? r.get<std::string>() : r.dump());
            }
            p.ranks = parse_ranks(items);
        }
        in.finish();
        sweep.finish();
        p.out = out_dir();
        return run_penalty(p, o, out);
    }
    throw ValidationError(fmt::format("manifest: unknown command '{}'", command));
}

// ---------------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spectral analysis and surgery for fine-tuned weight checkpoints", "specsurg"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    CommonOptions common;
    std::string svd_backend = "auto";
    std::string kernel_set = "auto";
    app.add_flag("--stamp", common.stamp, "Add a generation timestamp to JSON reports");
    app.add_flag("--emit-plot-data", common.emit_plot_data, "Also write long-format CSVs for plotting");
    app.add_option("--svd-backend", svd_backend, "jacobi, lapack or auto")->capture_default_str();
    app.add_option("--kernels", kernel_set, "scalar, avx2, neon or auto")->capture_default_str();

    const auto pair_opts = [](CLI::App* sub, PairSelection& p, const char* a, const char* b) {
        sub->add_option(std::string("--") + a, p.a, "First checkpoint")->required();
        sub->add_option(std::string("--") + b, p.b, "Second checkpoint")->required();
        sub->add_option("--profile", p.profile, "Naming profile name or JSON file")->capture_default_str();
        sub->add_option("--layers", p.layers, "all, first:K, last:K or list:a,b")->capture_default_str();
        sub->add_option("--kinds", p.kinds, "Comma-separated kinds or all")->capture_default_str();
    };

    SvdDiffParams diff;
    auto* c_diff = app.add_subcommand("svd-diff", "Per-rank singular value differences between two checkpoints");
    pair_opts(c_diff, diff.pair, "a", "b");
    c_diff->add_option("--out", diff.out, "Output directory")->required();

    AnglesParams angles;
    std::vector<std::string> angle_ranks{"all"};
    auto* c_angles = app.add_subcommand("angles", "Principal angles between singular subspaces");
    pair_opts(c_angles, angles.pair, "a", "b");
    c_angles->add_option("--ranks", angle_ranks, "Rank selection(s): all, top:K, bottom:K, range:A:B");
    c_angles->add_option("--side", angles.side, "left, right or both")->capture_default_str();
    c_angles->add_option("--out", angles.out, "Output directory")->required();

    RestoreParams restore;
    std::vector<std::string> restore_layers{"all"}, restore_ranks{"all"};
    auto* c_restore = app.add_subcommand("restore", "Splice singular values or vectors between checkpoints");
    c_restore->add_option("--mode", restore.mode, "values or vectors")->capture_default_str();
    c_restore->add_option("--donor", restore.donor, "Checkpoint providing the spliced components")->required();
    c_restore->add_option("--host", restore.host, "Checkpoint being edited")->required();
    c_restore->add_option("--layers", restore_layers, "Layer selection(s); braces expand, e.g. first:{5,10}");
    c_restore->add_option("--ranks", restore_ranks, "Rank selection(s); braces expand, e.g. top:{64,256}");
    c_restore->add_option("--profile", restore.profile, "Naming profile name or JSON file")->capture_default_str();
    c_restore->add_option("--kinds", restore.kinds, "Comma-separated kinds or all")->capture_default_str();
    c_restore->add_option("--align", restore.align, "none or procrustes (vectors mode)")->capture_default_str();
    c_restore->add_flag("--force-f32", restore.force_f32, "Store edited tensors as F32");
    c_restore->add_option("--out", restore.out, "Output directory")->required();

    AdvStatsParams adv;
    std::string adv_out;
    auto* c_adv = app.add_subcommand("adv-stats", "Advantage distribution statistics and trainability verdict");
    c_adv->add_option("--input", adv.input, "Rollout log (JSON lines)")->required();
    c_adv->add_option("--bins", adv.bins, "fd or a bin count")->capture_default_str();
    c_adv->add_option("--bootstrap", adv.bootstrap, "Silverman bootstrap replicates")->capture_default_str();
    c_adv->add_option("--seed", adv.seed, "Random seed")->capture_default_str();
    c_adv->add_option("--modes", adv.modes, "Mode budget for the Silverman test")->capture_default_str();
    c_adv->add_option("--thresholds", adv.thresholds, "default or a JSON file")->capture_default_str();
    c_adv->add_option("--kl-direction", adv.kl_direction, "empirical or normal")->capture_default_str();
    c_adv->add_option("--min-samples", adv.min_samples, "Minimum sample count")->capture_default_str();
    c_adv->add_option("--gamma", adv.gamma, "Discount for GAE recomputation")->capture_default_str();
    c_adv->add_option("--lambda", adv.lambda, "GAE lambda")->capture_default_str();
    c_adv->add_option("--granularity", adv.granularity, "token, step or unspecified")->capture_default_str();
    c_adv->add_option("--threads", adv.threads, "Bootstrap worker threads, 0 = all cores")->capture_default_str();
    c_adv->add_option("--out", adv_out, "Output directory (summary goes to stdout when omitted)");

    PenaltyParams pen;
    std::vector<std::string> pen_ranks{"512"};
    std::string pen_out;
    auto* c_pen = app.add_subcommand("penalty", "Rotation penalty of a checkpoint against a reference");
    c_pen->add_option("--ref", pen.ref, "Reference checkpoint")->required();
    c_pen->add_option("--current", pen.current, "Checkpoint being measured")->required();
    c_pen->add_option("--rank", pen_ranks, "Reference rank(s); braces expand, e.g. {128,512}");
    c_pen->add_option("--profile", pen.profile, "Naming profile name or JSON file")->capture_default_str();
    c_pen->add_option("--layers", pen.layers, "Layer selection")->capture_default_str();
    c_pen->add_option("--kinds", pen.kinds, "Comma-separated kinds or all")->capture_default_str();
    c_pen->add_option("--out", pen_out, "Output directory (CSV goes to stdout when omitted)");

    fs::path manifest;
    auto* c_run = app.add_subcommand("run", "Execute a JSON run manifest");
    c_run->add_option("--manifest", manifest, "Manifest file")->required();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (!kernels::select(kernel_set)) {
            throw ValidationError(fmt::format("kernel set '{}' is not available on this machine", kernel_set));
        }
        const auto backend = spectral::parse_svd_backend(svd_backend);
        if (backend == spectral::SvdBackend::Lapack && !spectral::lapack_available()) {
            throw ValidationError("this build has no LAPACK backend");
        }
        spectral::set_default_backend(backend);

        if (c_diff->parsed()) return run_svd_diff(diff, common, out);
        if (c_angles->parsed()) {
            angles.ranks = expand_all(angle_ranks);
            return run_angles(angles, common, out);
        }
        if (c_restore->parsed()) {
            restore.layers = expand_all(restore_layers);
            restore.ranks = expand_all(restore_ranks);
            return run_restore(restore, common, out);
        }
        if (c_adv->parsed()) {
            if (!adv_out.empty()) adv.out = adv_out;
            return run_adv_stats(adv, common, out);
        }
        if (c_pen->parsed()) {
            pen.ranks = parse_ranks(pen_ranks);
            if (!pen_out.empty()) pen.out = pen_out;
            return run_penalty(pen, common, out);
        }
        if (c_run->parsed()) return run_manifest(manifest, common, out);
        return kValidation;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        switch (e.kind()) {
        case ErrorKind::Validation: return kValidation;
        case ErrorKind::Numerical: return kNumerical;
        case ErrorKind::Io: return kIo;
        }
        return kNumerical;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kNumerical;
    }
}

} // namespace specsurg::cli
