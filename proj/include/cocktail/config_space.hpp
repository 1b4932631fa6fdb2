#ifndef COCKTAIL_CONFIG_SPACE_HPP
#define COCKTAIL_CONFIG_SPACE_HPP

#include "cocktail/rng.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace cocktail {

using ConfigValue = std::variant<bool, int64_t, double, std::string>;

// A point in the cocktail space: exactly the parameters active under the
// space's conditional structure, by name.
using Configuration = std::map<std::string, ConfigValue>;

bool config_bool(const Configuration& c, const std::string& key, bool fallback = false);
int64_t config_int(const Configuration& c, const std::string& key, int64_t fallback = 0);
double config_real(const Configuration& c, const std::string& key, double fallback = 0.0);
std::string config_text(const Configuration& c, const std::string& key,
                        const std::string& fallback = "");
std::string config_to_json(const Configuration& c);
Configuration config_from_json(const std::string& text);

enum class ParamKind { Boolean, Categorical, UniformReal, LogUniformReal, UniformInt };

struct Condition {
    std::string parent;
    std::vector<ConfigValue> required; // active iff parent's value is one of these
};

struct HyperparameterDef {
    std::string name;
    ParamKind kind = ParamKind::Boolean;
    std::vector<std::string> levels; // Categorical
    double lo = 0.0, hi = 0.0;       // UniformReal / LogUniformReal
    int64_t ilo = 0, ihi = 0;        // UniformInt
    std::optional<Condition> condition;
};

// Slot value used in encoded vectors for parameters inactive under the
// conditional structure. Deliberately outside the unit interval.
constexpr double kInactiveSlot = -1.0;

class SearchSpace {
public:
    SearchSpace() = default;
    explicit SearchSpace(std::vector<HyperparameterDef> params,
                         Configuration fixed = {});

    const std::vector<HyperparameterDef>& params() const { return params_; }
    const Configuration& fixed() const { return fixed_; }
    size_t dimension() const { return params_.size(); }
    const HyperparameterDef* find(const std::string& name) const;

    // Top-down sample respecting conditions; includes the fixed assignments.
    Configuration sample(Rng& rng) const;

    // Empty list means the configuration is valid. Never throws.
    std::vector<std::string> validate(const Configuration& c) const;

    // True iff `def` is active given the values in `c` (fixed values included).
    bool is_active(const HyperparameterDef& def, const Configuration& c) const;

    // Unit-hypercube encoding, one slot per parameter in definition order;
    // inactive parameters take kInactiveSlot.
    std::vector<double> encode(const Configuration& c) const;

    // Inverse of encode for the active slots. Slots at kInactiveSlot are
    // skipped; conditional structure decides activity top-down.
    Configuration decode(const std::vector<double>& v) const;

    std::string to_json() const;
    static SearchSpace from_json(const std::string& text);

    // One definition per line: name, kind, range, condition.
    std::string describe() const;

private:
    std::vector<HyperparameterDef> params_;
    Configuration fixed_;
};

struct CocktailSpaceOptions {
    bool tune_learning_rate = false;
};

// The canonical 19-definition conditional cocktail space; the learning-rate
// option appends a 20th log-uniform definition.
SearchSpace cocktail_space(const CocktailSpaceOptions& options = {});

// Names of the 13 selectable regularization techniques, as used by the
// frequency reports and by restrict_top_k.
const std::vector<std::string>& regularizer_names();

// Regularizer -> family, per the taxonomy used in the frequency reports:
// weight_decay, augmentation, ensemble, structural, implicit.
const std::map<std::string, std::string>& regularizer_families();

// Which of the 13 techniques a configuration has switched on.
std::vector<std::string> active_regularizers(const Configuration& c);

// Space with the k most frequent techniques forced on (ties broken by name)
// and all others forced off; subsidiary hyperparameters of forced-on
// techniques stay searchable.
SearchSpace restrict_top_k(const SearchSpace& space,
                           const std::map<std::string, long>& frequencies, int k);

} // namespace cocktail

#endif
