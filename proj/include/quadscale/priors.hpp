#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "quadscale/core.hpp"

namespace quadscale {

/// Gaussian prior over one physical dimension, in meters.
struct DimensionPrior {
    double mean = 0.0;
    double std = 0.0;
};

/// Per-class size prior: three dimension distributions, sorted by descending mean.
struct SizePrior {
    std::string class_name;
    std::array<DimensionPrior, 3> dims;
};

/// Immutable map from class name to size prior. Case-sensitive.
class PriorRepository {
public:
    void insert(SizePrior prior) {
        std::sort(prior.dims.begin(), prior.dims.end(),
                  [](const DimensionPrior& a, const DimensionPrior& b) {
                      return a.mean > b.mean;
                  });
        for (const auto& d : prior.dims) {
            if (!(d.mean > 0.0) || !(d.std > 0.0)) {
                throw ValidationError("prior for class '" + prior.class_name +
                                      "' must have positive mean and std");
            }
        }
        entries_[prior.class_name] = std::move(prior);
    }

    std::optional<SizePrior> lookup(const std::string& class_name) const {
        auto it = entries_.find(class_name);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const { return entries_.size(); }

    std::vector<std::string> class_names() const {
        std::vector<std::string> names;
        names.reserve(entries_.size());
        for (const auto& [name, _] : entries_) names.push_back(name);
        return names;
    }

private:
    std::map<std::string, SizePrior> entries_;
};

/// Loads priors from a JSON file:
///   {"<class>": {"dims": [{"mean_m": x, "std_m": y}, {...}, {...}]}}
/// Exactly three dims per class; unknown keys are ignored.
inline PriorRepository load_priors(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open prior file: " + path);
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("prior file '" + path + "': " + e.what());
    }
    if (!doc.is_object()) {
        throw ParseError("prior file '" + path + "': top level must be an object");
    }
    PriorRepository repo;
    for (const auto& [name, body] : doc.items()) {
        if (!body.contains("dims") || !body["dims"].is_array() ||
            body["dims"].size() != 3) {
            throw ParseError("class '" + name + "': expected exactly 3 dims");
        }
        SizePrior prior;
        prior.class_name = name;
        for (int i = 0; i < 3; ++i) {
            const auto& d = body["dims"][i];
            if (!d.contains("mean_m") || !d.contains("std_m") ||
                !d["mean_m"].is_number() || !d["std_m"].is_number()) {
                throw ParseError("class '" + name + "' dim " + std::to_string(i) +
                                 ": expected numeric mean_m and std_m");
            }
            prior.dims[i] = {d["mean_m"].get<double>(), d["std_m"].get<double>()};
        }
        repo.insert(std::move(prior));
    }
    return repo;
}

inline void save_priors(const PriorRepository& repo, const std::string& path) {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& name : repo.class_names()) {
        const SizePrior prior = *repo.lookup(name);
        nlohmann::json dims = nlohmann::json::array();
        for (const auto& d : prior.dims) {
            dims.push_back({{"mean_m", d.mean}, {"std_m", d.std}});
        }
        doc[name] = {{"dims", dims}};
    }
    std::ofstream out(path);
    out << doc.dump(2) << "\n";
}

/// Illustrative sample priors for common indoor classes plus "car".
/// Values are plausible hand-picked magnitudes, not measured statistics.
inline PriorRepository builtin_sample_priors() {
    PriorRepository repo;
    auto add = [&repo](const std::string& name, std::array<double, 3> mean,
                       std::array<double, 3> std) {
        SizePrior p;
        p.class_name = name;
        for (int i = 0; i < 3; ++i) p.dims[i] = {mean[i], std[i]};
        repo.insert(std::move(p));
    };
    add("bottle", {0.28, 0.07, 0.07}, {0.05, 0.015, 0.015});
    add("book", {0.24, 0.16, 0.03}, {0.04, 0.03, 0.01});
    add("keyboard", {0.45, 0.15, 0.025}, {0.05, 0.03, 0.008});
    add("monitor", {0.55, 0.35, 0.06}, {0.08, 0.05, 0.02});
    add("cup", {0.11, 0.08, 0.08}, {0.02, 0.015, 0.015});
    add("laptop", {0.34, 0.24, 0.02}, {0.04, 0.03, 0.006});
    add("mouse", {0.11, 0.06, 0.035}, {0.015, 0.01, 0.008});
    add("chair", {0.90, 0.50, 0.45}, {0.12, 0.08, 0.07});
    add("desk", {1.40, 0.75, 0.70}, {0.25, 0.08, 0.08});
    add("sofa", {2.00, 0.90, 0.85}, {0.30, 0.12, 0.10});
    add("potted_plant", {0.35, 0.20, 0.20}, {0.10, 0.05, 0.05});
    add("tv", {1.00, 0.60, 0.08}, {0.20, 0.10, 0.03});
    add("car", {4.50, 1.80, 1.50}, {0.45, 0.15, 0.12});
    return repo;
}

}  // namespace quadscale
