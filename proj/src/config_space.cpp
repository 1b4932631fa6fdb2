#include "cocktail/config_space.hpp"

#include "cocktail/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace cocktail {
namespace {

using nlohmann::json;

json value_to_json(const ConfigValue& v) {
    if (const auto* b = std::get_if<bool>(&v)) return *b;
    if (const auto* i = std::get_if<int64_t>(&v)) return *i;
    if (const auto* d = std::get_if<double>(&v)) return *d;
    return std::get<std::string>(v);
}

ConfigValue value_from_json(const json& j) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number_integer()) return j.get<int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    throw IoError("unsupported JSON value type for a configuration entry");
}

std::string value_to_text(const ConfigValue& v) {
    if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
    if (const auto* i = std::get_if<int64_t>(&v)) return std::to_string(*i);
    if (const auto* d = std::get_if<double>(&v)) {
        std::ostringstream out;
        out << *d;
        return out.str();
    }
    return std::get<std::string>(v);
}

std::string kind_name(ParamKind k) {
    switch (k) {
        case ParamKind::Boolean: return "boolean";
        case ParamKind::Categorical: return "categorical";
        case ParamKind::UniformReal: return "uniform_real";
        case ParamKind::LogUniformReal: return "log_uniform_real";
        case ParamKind::UniformInt: return "uniform_int";
    }
    throw ContractViolation("unreachable parameter kind");
}

ParamKind kind_from_name(const std::string& s) {
    if (s == "boolean") return ParamKind::Boolean;
    if (s == "categorical") return ParamKind::Categorical;
    if (s == "uniform_real") return ParamKind::UniformReal;
    if (s == "log_uniform_real") return ParamKind::LogUniformReal;
    if (s == "uniform_int") return ParamKind::UniformInt;
    throw IoError("unknown parameter kind: " + s);
}

size_t level_index(const HyperparameterDef& def, const std::string& level) {
    for (size_t i = 0; i < def.levels.size(); ++i)
        if (def.levels[i] == level) return i;
    throw ContractViolation("level '" + level + "' not in parameter " + def.name);
}

double clamp01(double u) { return std::min(1.0, std::max(0.0, u)); }

} // namespace

bool config_bool(const Configuration& c, const std::string& key, bool fallback) {
    auto it = c.find(key);
    if (it == c.end()) return fallback;
    const auto* b = std::get_if<bool>(&it->second);
    require(b != nullptr, "configuration key '" + key + "' is not boolean");
    return *b;
}

int64_t config_int(const Configuration& c, const std::string& key, int64_t fallback) {
    auto it = c.find(key);
    if (it == c.end()) return fallback;
    const auto* i = std::get_if<int64_t>(&it->second);
    require(i != nullptr, "configuration key '" + key + "' is not an integer");
    return *i;
}

double config_real(const Configuration& c, const std::string& key, double fallback) {
    auto it = c.find(key);
    if (it == c.end()) return fallback;
    if (const auto* d = std::get_if<double>(&it->second)) return *d;
    if (const auto* i = std::get_if<int64_t>(&it->second)) return static_cast<double>(*i);
    throw ContractViolation("configuration key '" + key + "' is not numeric");
}

std::string config_text(const Configuration& c, const std::string& key,
                        const std::string& fallback) {
    auto it = c.find(key);
    if (it == c.end()) return fallback;
    const auto* s = std::get_if<std::string>(&it->second);
    require(s != nullptr, "configuration key '" + key + "' is not text");
    return *s;
}

std::string config_to_json(const Configuration& c) {
    json j = json::object();
    for (const auto& [k, v] : c) j[k] = value_to_json(v);
    return j.dump();
}

Configuration config_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw IoError("configuration JSON must be an object");
    Configuration c;
    for (const auto& [k, v] : j.items()) c[k] = value_from_json(v);
    return c;
}

SearchSpace::SearchSpace(std::vector<HyperparameterDef> params, Configuration fixed)
    : params_(std::move(params)), fixed_(std::move(fixed)) {
    std::set<std::string> seen;
    for (const auto& [k, v] : fixed_) {
        require(!k.empty(), "fixed assignment with empty name");
        seen.insert(k);
    }
    for (size_t i = 0; i < params_.size(); ++i) {
        const auto& p = params_[i];
        require(!p.name.empty(), "parameter with empty name");
        require(seen.insert(p.name).second, "duplicate parameter name: " + p.name);
        switch (p.kind) {
            case ParamKind::Boolean:
                break;
            case ParamKind::Categorical: {
                require(!p.levels.empty(), p.name + ": categorical needs levels");
                std::set<std::string> lv(p.levels.begin(), p.levels.end());
                require(lv.size() == p.levels.size(), p.name + ": duplicate levels");
                break;
            }
            case ParamKind::UniformReal:
                require(std::isfinite(p.lo) && std::isfinite(p.hi) && p.lo < p.hi,
                        p.name + ": needs lo < hi");
                break;
            case ParamKind::LogUniformReal:
                require(std::isfinite(p.lo) && std::isfinite(p.hi) && 0.0 < p.lo &&
                            p.lo < p.hi,
                        p.name + ": needs 0 < lo < hi");
                break;
            case ParamKind::UniformInt:
                require(p.ilo < p.ihi, p.name + ": needs lo < hi");
                break;
        }
        if (p.condition) {
            require(!p.condition->required.empty(),
                    p.name + ": condition without required values");
            const std::string& parent = p.condition->parent;
            bool found = fixed_.count(parent) > 0;
            for (size_t j = 0; j < i && !found; ++j)
                found = params_[j].name == parent;
            require(found, p.name + ": condition parent '" + parent +
                               "' must precede it or be fixed");
        }
    }
}

const HyperparameterDef* SearchSpace::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

bool SearchSpace::is_active(const HyperparameterDef& def, const Configuration& c) const {
    if (!def.condition) return true;
    auto it = c.find(def.condition->parent);
    if (it == c.end()) {
        it = fixed_.find(def.condition->parent);
        if (it == fixed_.end()) return false;
    }
    for (const auto& want : def.condition->required)
        if (it->second == want) return true;
    return false;
}

Configuration SearchSpace::sample(Rng& rng) const {
    Configuration c = fixed_;
    for (const auto& p : params_) {
        if (!is_active(p, c)) continue;
        switch (p.kind) {
            case ParamKind::Boolean:
                c[p.name] = rng.bernoulli(0.5) != 0;
                break;
            case ParamKind::Categorical:
                c[p.name] = p.levels[static_cast<size_t>(
                    rng.uniform_int(0, static_cast<int64_t>(p.levels.size()) - 1))];
                break;
            case ParamKind::UniformReal:
                c[p.name] = rng.uniform(p.lo, p.hi);
                break;
            case ParamKind::LogUniformReal:
                c[p.name] = std::exp(rng.uniform(std::log(p.lo), std::log(p.hi)));
                break;
            case ParamKind::UniformInt:
                c[p.name] = rng.uniform_int(p.ilo, p.ihi);
                break;
        }
    }
    return c;
}

std::vector<std::string> SearchSpace::validate(const Configuration& c) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : fixed_) {
        auto it = c.find(k);
        if (it == c.end())
            out.push_back("missing fixed parameter: " + k);
        else if (!(it->second == v))
            out.push_back("fixed parameter " + k + " must equal " + value_to_text(v));
    }
    for (const auto& p : params_) {
        bool active = is_active(p, c);
        auto it = c.find(p.name);
        if (!active) {
            if (it != c.end())
                out.push_back(p.name + " is present but inactive under its condition");
            continue;
        }
        if (it == c.end()) {
            out.push_back("missing active parameter: " + p.name);
            continue;
        }
        const ConfigValue& v = it->second;
        switch (p.kind) {
            case ParamKind::Boolean:
                if (!std::holds_alternative<bool>(v))
                    out.push_back(p.name + " must be boolean");
                break;
            case ParamKind::Categorical: {
                const auto* s = std::get_if<std::string>(&v);
                if (s == nullptr ||
                    std::find(p.levels.begin(), p.levels.end(), *s) == p.levels.end())
                    out.push_back(p.name + " must be one of its levels");
                break;
            }
            case ParamKind::UniformReal:
            case ParamKind::LogUniformReal: {
                const auto* d = std::get_if<double>(&v);
                if (d == nullptr || !std::isfinite(*d) || *d < p.lo || *d > p.hi)
                    out.push_back(p.name + " must be a real in [" +
                                  std::to_string(p.lo) + ", " + std::to_string(p.hi) +
                                  "]");
                break;
            }
            case ParamKind::UniformInt: {
                const auto* i = std::get_if<int64_t>(&v);
                if (i == nullptr || *i < p.ilo || *i > p.ihi)
                    out.push_back(p.name + " must be an integer in [" +
                                  std::to_string(p.ilo) + ", " + std::to_string(p.ihi) +
                                  "]");
                break;
            }
        }
    }
    for (const auto& [k, v] : c) {
        if (fixed_.count(k) > 0 || find(k) != nullptr) continue;
        out.push_back("unknown parameter: " + k);
    }
    return out;
}

std::vector<double> SearchSpace::encode(const Configuration& c) const {
    std::vector<double> v(params_.size(), kInactiveSlot);
    for (size_t i = 0; i < params_.size(); ++i) {
        const auto& p = params_[i];
        if (!is_active(p, c)) continue;
        auto it = c.find(p.name);
        require(it != c.end(), "encode: missing active parameter " + p.name);
        switch (p.kind) {
            case ParamKind::Boolean:
                v[i] = std::get<bool>(it->second) ? 1.0 : 0.0;
                break;
            case ParamKind::Categorical: {
                size_t idx = level_index(p, std::get<std::string>(it->second));
                v[i] = p.levels.size() < 2
                           ? 0.0
                           : static_cast<double>(idx) /
                                 static_cast<double>(p.levels.size() - 1);
                break;
            }
            case ParamKind::UniformReal:
                v[i] = (std::get<double>(it->second) - p.lo) / (p.hi - p.lo);
                break;
            case ParamKind::LogUniformReal:
                v[i] = (std::log(std::get<double>(it->second)) - std::log(p.lo)) /
                       (std::log(p.hi) - std::log(p.lo));
                break;
            case ParamKind::UniformInt:
                v[i] = static_cast<double>(std::get<int64_t>(it->second) - p.ilo) /
                       static_cast<double>(p.ihi - p.ilo);
                break;
        }
    }
    return v;
}

Configuration SearchSpace::decode(const std::vector<double>& v) const {
    require(v.size() == params_.size(), "decode: slot count mismatch");
    Configuration c = fixed_;
    for (size_t i = 0; i < params_.size(); ++i) {
        const auto& p = params_[i];
        if (!is_active(p, c)) continue;
        double u = clamp01(v[i]); // sentinel or out-of-range slots land on an endpoint
        switch (p.kind) {
            case ParamKind::Boolean:
                c[p.name] = u >= 0.5;
                break;
            case ParamKind::Categorical: {
                auto idx = static_cast<size_t>(
                    std::llround(u * static_cast<double>(p.levels.size() - 1)));
                c[p.name] = p.levels[std::min(idx, p.levels.size() - 1)];
                break;
            }
            case ParamKind::UniformReal:
                c[p.name] = p.lo + u * (p.hi - p.lo);
                break;
            case ParamKind::LogUniformReal:
                c[p.name] = std::exp(std::log(p.lo) +
                                     u * (std::log(p.hi) - std::log(p.lo)));
                break;
            case ParamKind::UniformInt:
                c[p.name] = p.ilo + static_cast<int64_t>(std::llround(
                                        u * static_cast<double>(p.ihi - p.ilo)));
                break;
        }
    }
    return c;
}

std::string SearchSpace::to_json() const {
    json out;
    out["version"] = 1;
    json plist = json::array();
    for (const auto& p : params_) {
        json jp;
        jp["name"] = p.name;
        jp["kind"] = kind_name(p.kind);
        switch (p.kind) {
            case ParamKind::Boolean:
                break;
            case ParamKind::Categorical:
                jp["levels"] = p.levels;
                break;
            case ParamKind::UniformReal:
            case ParamKind::LogUniformReal:
                jp["lo"] = p.lo;
                jp["hi"] = p.hi;
                break;
            case ParamKind::UniformInt:
                jp["lo"] = p.ilo;
                jp["hi"] = p.ihi;
                break;
        }
        if (p.condition) {
            json cond;
            cond["parent"] = p.condition->parent;
            json vals = json::array();
            for (const auto& rv : p.condition->required) vals.push_back(value_to_json(rv));
            cond["values"] = vals;
            jp["condition"] = cond;
        }
        plist.push_back(jp);
    }
    out["params"] = plist;
    json jf = json::object();
    for (const auto& [k, v] : fixed_) jf[k] = value_to_json(v);
    out["fixed"] = jf;
    return out.dump(2);
}

SearchSpace SearchSpace::from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("params"))
        throw IoError("search-space JSON must be an object with a params array");
    std::vector<HyperparameterDef> params;
    for (const auto& jp : j.at("params")) {
        HyperparameterDef p;
        p.name = jp.at("name").get<std::string>();
        p.kind = kind_from_name(jp.at("kind").get<std::string>());
        switch (p.kind) {
            case ParamKind::Boolean:
                break;
            case ParamKind::Categorical:
                p.levels = jp.at("levels").get<std::vector<std::string>>();
                break;
            case ParamKind::UniformReal:
            case ParamKind::LogUniformReal:
                p.lo = jp.at("lo").get<double>();
                p.hi = jp.at("hi").get<double>();
                break;
            case ParamKind::UniformInt:
                p.ilo = jp.at("lo").get<int64_t>();
                p.ihi = jp.at("hi").get<int64_t>();
                break;
        }
        if (jp.contains("condition")) {
            Condition cond;
            cond.parent = jp.at("condition").at("parent").get<std::string>();
            for (const auto& rv : jp.at("condition").at("values"))
                cond.required.push_back(value_from_json(rv));
            p.condition = std::move(cond);
        }
        params.push_back(std::move(p));
    }
    Configuration fixed;
    if (j.contains("fixed"))
        for (const auto& [k, v] : j.at("fixed").items()) fixed[k] = value_from_json(v);
    return SearchSpace(std::move(params), std::move(fixed));
}

std::string SearchSpace::describe() const {
    std::ostringstream out;
    for (const auto& p : params_) {
        out << p.name << ": " << kind_name(p.kind);
        switch (p.kind) {
            case ParamKind::Boolean:
                break;
            case ParamKind::Categorical: {
                out << " {";
                for (size_t i = 0; i < p.levels.size(); ++i)
                    out << (i ? ", " : "") << p.levels[i];
                out << "}";
                break;
            }
            case ParamKind::UniformReal:
            case ParamKind::LogUniformReal:
                out << " [" << p.lo << ", " << p.hi << "]";
                break;
            case ParamKind::UniformInt:
                out << " [" << p.ilo << ", " << p.ihi << "]";
                break;
        }
        if (p.condition) {
            out << "  (when " << p.condition->parent << " in {";
            for (size_t i = 0; i < p.condition->required.size(); ++i)
                out << (i ? ", " : "") << value_to_text(p.condition->required[i]);
            out << "})";
        }
        out << "\n";
    }
    for (const auto& [k, v] : fixed_)
        out << "fixed " << k << " = " << value_to_text(v) << "\n";
    return out.str();
}

SearchSpace cocktail_space(const CocktailSpaceOptions& options) {
    auto boolean = [](const std::string& name) {
        HyperparameterDef p;
        p.name = name;
        p.kind = ParamKind::Boolean;
        return p;
    };
    auto on_parent = [](HyperparameterDef p, const std::string& parent, ConfigValue want) {
        p.condition = Condition{parent, {std::move(want)}};
        return p;
    };
    auto real = [](const std::string& name, double lo, double hi, bool log_scale = false) {
        HyperparameterDef p;
        p.name = name;
        p.kind = log_scale ? ParamKind::LogUniformReal : ParamKind::UniformReal;
        p.lo = lo;
        p.hi = hi;
        return p;
    };

    std::vector<HyperparameterDef> params;
    params.push_back(boolean("use_batch_norm"));
    params.push_back(boolean("use_swa"));
    params.push_back(boolean("use_lookahead"));
    params.push_back(boolean("use_weight_decay"));
    params.push_back(boolean("use_dropout"));
    params.push_back(boolean("use_snapshot_ensemble"));
    params.push_back(boolean("use_skip_connection"));

    HyperparameterDef aug;
    aug.name = "augmentation";
    aug.kind = ParamKind::Categorical;
    aug.levels = {"mixup", "cutmix", "cutout", "adversarial", "none"};
    params.push_back(aug);

    HyperparameterDef la_steps;
    la_steps.name = "lookahead_steps";
    la_steps.kind = ParamKind::UniformInt;
    la_steps.ilo = 5;
    la_steps.ihi = 10;
    la_steps.condition = Condition{"use_lookahead", {true}};
    params.push_back(la_steps);

    params.push_back(on_parent(real("lookahead_alpha", 0.5, 0.8), "use_lookahead", true));
    params.push_back(
        on_parent(real("weight_decay_lambda", 1e-5, 1e-1, true), "use_weight_decay", true));
    params.push_back(on_parent(real("dropout_rate", 0.0, 0.8), "use_dropout", true));

    HyperparameterDef skip;
    skip.name = "skip_variant";
    skip.kind = ParamKind::Categorical;
    skip.levels = {"residual", "shake_shake", "shake_drop"};
    skip.condition = Condition{"use_skip_connection", {true}};
    params.push_back(skip);

    params.push_back(on_parent(real("shake_drop_max_prob", 0.0, 1.0), "skip_variant",
                               std::string("shake_drop")));
    params.push_back(
        on_parent(real("mixup_alpha", 0.0, 1.0), "augmentation", std::string("mixup")));
    params.push_back(
        on_parent(real("cutmix_prob", 0.0, 1.0), "augmentation", std::string("cutmix")));
    params.push_back(
        on_parent(real("cutout_prob", 0.0, 1.0), "augmentation", std::string("cutout")));
    params.push_back(
        on_parent(real("cutout_ratio", 0.0, 1.0), "augmentation", std::string("cutout")));
    params.push_back(on_parent(real("adversarial_epsilon", 0.0, 0.1), "augmentation",
                               std::string("adversarial")));

    if (options.tune_learning_rate)
        params.push_back(real("learning_rate", 1e-4, 1e-1, true));

    return SearchSpace(std::move(params));
}

const std::vector<std::string>& regularizer_names() {
    static const std::vector<std::string> names = {
        "batch_norm", "swa",      "lookahead",   "weight_decay", "dropout",
        "snapshot_ensemble", "skip_connection", "shake_shake",  "shake_drop",
        "mixup",      "cutmix",   "cutout",      "adversarial"};
    return names;
}

const std::map<std::string, std::string>& regularizer_families() {
    static const std::map<std::string, std::string> fam = {
        {"weight_decay", "weight_decay"},
        {"mixup", "augmentation"},
        {"cutmix", "augmentation"},
        {"cutout", "augmentation"},
        {"adversarial", "augmentation"},
        {"dropout", "ensemble"},
        {"snapshot_ensemble", "ensemble"},
        {"skip_connection", "structural"},
        {"shake_shake", "structural"},
        {"shake_drop", "structural"},
        {"batch_norm", "implicit"},
        {"swa", "implicit"},
        {"lookahead", "implicit"}};
    return fam;
}

std::vector<std::string> active_regularizers(const Configuration& c) {
    const std::string aug = config_text(c, "augmentation", "none");
    const std::string variant =
        config_bool(c, "use_skip_connection") ? config_text(c, "skip_variant", "residual")
                                              : "";
    std::vector<std::string> out;
    for (const auto& name : regularizer_names()) {
        bool on = false;
        if (name == "mixup" || name == "cutmix" || name == "cutout" ||
            name == "adversarial")
            on = aug == name;
        else if (name == "shake_shake" || name == "shake_drop")
            on = variant == name;
        else
            on = config_bool(c, "use_" + name);
        if (on) out.push_back(name);
    }
    return out;
}

SearchSpace restrict_top_k(const SearchSpace& space,
                           const std::map<std::string, long>& frequencies, int k) {
    const auto& names = regularizer_names();
    require(k >= 0 && k <= static_cast<int>(names.size()),
            "restrict_top_k: k out of range");

    auto count_of = [&](const std::string& name) {
        auto it = frequencies.find(name);
        return it == frequencies.end() ? 0L : it->second;
    };
    auto more_frequent = [&](const std::string& a, const std::string& b) {
        long ca = count_of(a), cb = count_of(b);
        return ca != cb ? ca > cb : a < b;
    };

    std::vector<std::string> ranked = names;
    std::sort(ranked.begin(), ranked.end(), more_frequent);
    std::set<std::string> chosen(ranked.begin(), ranked.begin() + k);

    bool skip_on = chosen.count("skip_connection") > 0 ||
                   chosen.count("shake_shake") > 0 || chosen.count("shake_drop") > 0;

    std::string variant;
    if (skip_on) {
        bool ss = chosen.count("shake_shake") > 0, sd = chosen.count("shake_drop") > 0;
        if (ss && sd)
            variant = more_frequent("shake_shake", "shake_drop") ? "shake_shake"
                                                                 : "shake_drop";
        else if (ss)
            variant = "shake_shake";
        else if (sd)
            variant = "shake_drop";
        else
            variant = "residual";
    }

    std::vector<std::string> augmenters;
    for (const auto& a : {"mixup", "cutmix", "cutout", "adversarial"})
        if (chosen.count(a) > 0) augmenters.push_back(a);
    std::sort(augmenters.begin(), augmenters.end(), more_frequent);
    const std::string aug_level = augmenters.empty() ? "none" : augmenters.front();

    Configuration fixed = space.fixed();
    fixed["use_batch_norm"] = chosen.count("batch_norm") > 0;
    fixed["use_swa"] = chosen.count("swa") > 0;
    fixed["use_lookahead"] = chosen.count("lookahead") > 0;
    fixed["use_weight_decay"] = chosen.count("weight_decay") > 0;
    fixed["use_dropout"] = chosen.count("dropout") > 0;
    fixed["use_snapshot_ensemble"] = chosen.count("snapshot_ensemble") > 0;
    fixed["use_skip_connection"] = skip_on;
    fixed["augmentation"] = aug_level;
    if (skip_on) fixed["skip_variant"] = variant;

    // Keep only definitions still reachable under the fixed gates; a
    // conditional dies with its parent.
    std::vector<HyperparameterDef> params;
    std::set<std::string> dead;
    for (const auto& p : space.params()) {
        if (fixed.count(p.name) > 0) continue;
        if (p.condition) {
            if (dead.count(p.condition->parent) > 0) {
                dead.insert(p.name);
                continue;
            }
            auto it = fixed.find(p.condition->parent);
            if (it != fixed.end()) {
                bool satisfied = false;
                for (const auto& want : p.condition->required)
                    satisfied = satisfied || it->second == want;
                if (!satisfied) {
                    dead.insert(p.name);
                    continue;
                }
            }
        }
        params.push_back(p);
    }
    return SearchSpace(std::move(params), std::move(fixed));
}

} // namespace cocktail
