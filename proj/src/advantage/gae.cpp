// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "specsurg/advantage.hpp"
#include "specsurg/error.hpp"

namespace specsurg::advantage {

std::vector<double> gae(const TrajectoryTrace& trace, const GaeParams& p) {
    const std::size_t T = trace.rewards.size();
    if (T == 0) throw ValidationError("gae: empty trajectory");
    if (trace.values.size() != T + 1) {
        throw ValidationError(
            fmt::format("gae: {} rewards need {} values (including the terminal value), got {}", T, T + 1,
                        trace.values.size()));
    }
    if (!(p.gamma >= 0.0 && p.gamma <= 1.0) || !(p.lambda >= 0.0 && p.lambda <= 1.0)) {
        throw ValidationError(fmt::format("gae: gamma={} lambda={} must lie in [0, 1]", p.gamma, p.lambda));
    }
    for (double v : trace.rewards) {
        if (!std::isfinite(v)) throw ValidationError("gae: non-finite reward");
    }
    for (double v : trace.values) {
        if (!std::isfinite(v)) throw ValidationError("gae: non-finite value estimate");
    }
    const double decay = p.gamma * p.lambda;
    std::vector<double> adv(T);
    double next = 0.0;
    for (std::size_t i = T; i-- > 0;) {
        const double delta = trace.rewards[i] + p.gamma * trace.values[i + 1] - trace.values[i];
        next = delta + decay * next;
        adv[i] = next;
    }
    return adv;
}

double ppo_objective(double ratio, double advantage, double epsilon) {
    if (!(ratio > 0.0)) throw ValidationError(fmt::format("ppo_objective: ratio {} must be positive", ratio));
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw ValidationError(fmt::format("ppo_objective: epsilon {} must lie in (0, 1)", epsilon));
    }
    const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    return std::min(ratio * advantage, clipped * advantage);
}

namespace {

std::string trace_id_string(const nlohmann::json& id) {
    if (id.is_string()) return id.get<std::string>();
    if (id.is_number_integer()) return fmt::format("{:020d}", id.get<std::int64_t>());
    throw ValidationError("trace_id must be a string or an integer");
}

struct Step {
    std::int64_t t = 0;
    bool has_reward = false;
    double reward = 0.0;
    double value = 0.0;
};

} // namespace

RolloutLog read_rollouts(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open rollout log '{}'", path.string()));

    RolloutLog log;
    std::map<std::string, std::vector<Step>> steps;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError(fmt::format("{}:{}: not valid JSON: {}", path.string(), lineno, e.what()));
        }
        try {
            if (j.contains("advantage")) {
                const double a = j.at("advantage").get<double>();
                if (!std::isfinite(a)) throw ValidationError("non-finite advantage");
                log.advantages.push_back(a);
                continue;
            }
            Step s;
            s.t = j.at("t").get<std::int64_t>();
            s.value = j.at("value").get<double>();
            if (j.contains("reward")) {
                s.has_reward = true;
                s.reward = j.at("reward").get<double>();
            }
            steps[trace_id_string(j.at("trace_id"))].push_back(s);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
        }
    }
    if (!log.advantages.empty() && !steps.empty()) {
        throw ValidationError(fmt::format("'{}' mixes advantage records with trajectory records", path.string()));
    }
    for (auto& [id, list] : steps) {
        std::sort(list.begin(), list.end(), [](const Step& a, const Step& b) { return a.t < b.t; });
        TrajectoryTrace trace;
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (list[i].t != static_cast<std::int64_t>(i)) {
                throw ValidationError(fmt::format("trace '{}' steps are not 0..T without gaps", id));
            }
            const bool last = i + 1 == list.size();
            if (!list[i].has_reward && !last) {
                throw ValidationError(fmt::format("trace '{}' step {} has no reward", id, i));
            }
            trace.values.push_back(list[i].value);
            if (list[i].has_reward) trace.rewards.push_back(list[i].reward);
        }
        if (trace.values.size() == trace.rewards.size()) trace.values.push_back(0.0);
        if (trace.rewards.empty()) throw ValidationError(fmt::format("trace '{}' has no rewarded steps", id));
        log.traces.emplace(id, std::move(trace));
    }
    return log;
}

std::vector<double> advantage_samples(const RolloutLog& log, const GaeParams& p) {
    if (!log.has_traces()) return log.advantages;
    std::vector<double> out;
    for (const auto& [_, trace] : log.traces) {
        const auto a = gae(trace, p);
        out.insert(out.end(), a.begin(), a.end());
    }
    return out;
}

} // namespace specsurg::advantage
