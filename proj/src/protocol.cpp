#include "cocktail/protocol.hpp"

#include "cocktail/augmentation.hpp"
#include "cocktail/errors.hpp"
#include "cocktail/stats.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>

namespace cocktail {
namespace {

using nlohmann::json;

double finite_or_zero(double v) { return std::isfinite(v) ? v : 0.0; }

json config_json(const Configuration& c) { return json::parse(config_to_json(c)); }

Configuration config_from_json_obj(const json& j) {
    return config_from_json(j.dump());
}

json trainer_json(const TrainerOptions& t) {
    return json{{"base_lr", t.base_lr},
                {"batch_size", t.batch_size},
                {"cycle_multiplier", t.cycle_multiplier},
                {"early_stopping", t.early_stopping},
                {"initial_cycle", t.initial_cycle},
                {"n_layers", t.n_layers},
                {"total_epochs", t.total_epochs},
                {"weighted_loss", t.weighted_loss},
                {"width", t.width}};
}

TrainerOptions trainer_from_json(const json& j) {
    TrainerOptions t;
    t.base_lr = j.at("base_lr").get<double>();
    t.batch_size = j.at("batch_size").get<size_t>();
    t.cycle_multiplier = j.at("cycle_multiplier").get<size_t>();
    t.early_stopping = j.at("early_stopping").get<bool>();
    t.initial_cycle = j.at("initial_cycle").get<size_t>();
    t.n_layers = j.at("n_layers").get<size_t>();
    t.total_epochs = j.at("total_epochs").get<size_t>();
    t.weighted_loss = j.at("weighted_loss").get<bool>();
    t.width = j.at("width").get<size_t>();
    return t;
}

json meta_json(const RunJournal& j) {
    return json{{"dataset", j.dataset},
                {"dimensionality", j.dimensionality},
                {"epochs", j.total_epochs},
                {"kind", "meta"},
                {"max_configs", j.max_configs},
                {"max_walltime_s", j.max_walltime_s},
                {"objective", j.objective_metric},
                {"schema_version", j.schema_version},
                {"seed", j.seed},
                {"space", json::parse(j.space_json)},
                {"space_fingerprint", j.space_fingerprint},
                {"started_unix_ms", j.started_unix_ms},
                {"trainer", trainer_json(j.trainer)},
                {"workers", j.workers}};
}

json trial_json(const TrialRecord& t) {
    return json{{"budget_epochs", t.budget_epochs},
                {"config", config_json(t.config)},
                {"end_ms", t.end_ms},
                {"failure_reason", t.failure_reason},
                {"id", t.id},
                {"kind", "trial"},
                {"objective", t.objective},
                {"ok", t.ok},
                {"seed", t.seed},
                {"selected_epoch", t.selected_epoch},
                {"source", t.source},
                {"start_ms", t.start_ms},
                {"train_loss", t.train_loss},
                {"val_balanced_accuracy", t.val_balanced_accuracy},
                {"val_loss", t.val_loss}};
}

TrialRecord trial_from_json(const json& j) {
    TrialRecord t;
    t.budget_epochs = j.at("budget_epochs").get<double>();
    t.config = config_from_json_obj(j.at("config"));
    t.end_ms = j.at("end_ms").get<double>();
    t.failure_reason = j.value("failure_reason", std::string());
    t.id = j.at("id").get<size_t>();
    t.objective = j.at("objective").get<double>();
    t.ok = j.at("ok").get<bool>();
    t.seed = j.at("seed").get<uint64_t>();
    t.selected_epoch = j.value("selected_epoch", size_t{0});
    t.source = j.at("source").get<std::string>();
    t.start_ms = j.at("start_ms").get<double>();
    t.train_loss = j.at("train_loss").get<double>();
    t.val_balanced_accuracy = j.at("val_balanced_accuracy").get<double>();
    t.val_loss = j.at("val_loss").get<double>();
    return t;
}

json incumbent_json(const IncumbentPoint& p) {
    return json{{"at_ms", p.at_ms},
                {"config", config_json(p.config)},
                {"kind", "incumbent"},
                {"objective", p.objective},
                {"trial_id", p.trial_id},
                {"val_balanced_accuracy", p.val_balanced_accuracy},
                {"val_loss", p.val_loss}};
}

IncumbentPoint incumbent_from_json(const json& j) {
    IncumbentPoint p;
    p.at_ms = j.at("at_ms").get<double>();
    p.config = config_from_json_obj(j.at("config"));
    p.objective = j.at("objective").get<double>();
    p.trial_id = j.at("trial_id").get<size_t>();
    p.val_balanced_accuracy = j.at("val_balanced_accuracy").get<double>();
    p.val_loss = j.at("val_loss").get<double>();
    return p;
}

json refit_json(const RefitResult& r) {
    return json{{"config", config_json(r.config)},
                {"epochs", r.epochs},
                {"kind", "refit"},
                {"seed", r.seed},
                {"test_balanced_accuracy", r.test_balanced_accuracy},
                {"test_loss", r.test_loss},
                {"wall_seconds", r.wall_seconds}};
}

RefitResult refit_from_json(const json& j) {
    RefitResult r;
    r.present = true;
    r.config = config_from_json_obj(j.at("config"));
    r.epochs = j.at("epochs").get<size_t>();
    r.seed = j.at("seed").get<size_t>();
    r.test_balanced_accuracy = j.at("test_balanced_accuracy").get<double>();
    r.test_loss = j.at("test_loss").get<double>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    return r;
}

class JournalWriter {
public:
    JournalWriter(const std::string& path, size_t interval)
        : out_(path, std::ios::trunc), interval_(std::max<size_t>(interval, 1)) {
        if (!out_) throw IoError("cannot open journal for writing: " + path);
    }
    void line(const json& j) {
        out_ << j.dump() << "\n";
        if (++since_flush_ >= interval_) {
            out_.flush();
            since_flush_ = 0;
        }
        if (!out_) throw IoError("journal write failed");
    }
    void close() {
        out_.flush();
        out_.close();
    }

private:
    std::ofstream out_;
    size_t interval_;
    size_t since_flush_ = 0;
};

std::vector<double> unit_weights(size_t n) { return std::vector<double>(n, 1.0); }

} // namespace

std::string objective_metric_name(ObjectiveMetric m) {
    return m == ObjectiveMetric::ValidationLoss ? "val_loss"
                                                : "one_minus_balanced_accuracy";
}

ObjectiveMetric objective_metric_from_name(const std::string& s) {
    if (s == "val_loss") return ObjectiveMetric::ValidationLoss;
    if (s == "one_minus_balanced_accuracy")
        return ObjectiveMetric::OneMinusBalancedAccuracy;
    throw ContractViolation("unknown objective metric: " + s);
}

size_t journal_flush_interval() {
    const char* env = std::getenv("COCKTAIL_FLUSH_INTERVAL");
    if (env == nullptr) return 1;
    const long v = std::atol(env);
    return v >= 1 ? static_cast<size_t>(v) : 1;
}

uint64_t space_fingerprint(const SearchSpace& space) {
    // FNV-1a over the canonical space serialization.
    const std::string text = space.to_json();
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

TrialRecord evaluate_config(const Configuration& c, const SplitDataset& data,
                            uint64_t seed, size_t budget_epochs,
                            const TrainerOptions& opts, ObjectiveMetric metric) {
    TrialRecord rec;
    rec.config = c;
    rec.seed = seed;
    rec.budget_epochs = static_cast<double>(budget_epochs);
    try {
        const TrainResult res = train(c, data.train_val_view(), seed, budget_epochs, opts);
        rec.selected_epoch = res.report.selected_epoch;
        rec.train_loss = res.report.train_loss.empty()
                             ? 0.0
                             : finite_or_zero(res.report.train_loss.back());
        rec.end_ms = res.report.wall_seconds * 1000.0;
        if (res.report.failed) {
            rec.ok = false;
            rec.objective = kWorstObjective;
            rec.failure_reason = res.report.failure_reason;
            return rec;
        }
        rec.val_loss = res.report.final_val_loss;
        rec.val_balanced_accuracy = res.report.final_val_balanced_accuracy;
        rec.objective = metric == ObjectiveMetric::ValidationLoss
                            ? rec.val_loss
                            : 1.0 - rec.val_balanced_accuracy;
        if (!std::isfinite(rec.objective)) {
            rec.ok = false;
            rec.objective = kWorstObjective;
            rec.failure_reason = "non-finite objective";
            rec.val_loss = finite_or_zero(rec.val_loss);
            return rec;
        }
        rec.ok = true;
    } catch (const ContractViolation&) {
        throw; // caller bug, not a trial failure
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.objective = kWorstObjective;
        rec.failure_reason = e.what();
    }
    return rec;
}

RunJournal search(const SplitDataset& data, const SearchSpace& space,
                  const SearchSettings& settings) {
    RunJournal journal;
    journal.dataset = data.name;
    journal.space_json = space.to_json();
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(space_fingerprint(space)));
        journal.space_fingerprint = buf;
    }
    journal.objective_metric = objective_metric_name(settings.objective);
    journal.seed = settings.seed;
    journal.workers = settings.workers;
    journal.dimensionality = space.dimension();
    journal.max_configs = settings.max_configs > 0 ? settings.max_configs
                                                   : 40 * space.dimension();
    journal.max_walltime_s = settings.max_walltime_s;
    journal.trainer = settings.trainer;
    journal.total_epochs = settings.trainer.total_epochs;
    journal.started_unix_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();

    SurrogateOptions surrogate = settings.surrogate;
    if (settings.multi_fidelity) {
        // Budgets snapped to the schedule's cycle boundaries.
        const Schedule sched =
            Schedule::geometric(settings.trainer.initial_cycle,
                                settings.trainer.cycle_multiplier,
                                settings.trainer.total_epochs);
        surrogate.fidelities.clear();
        size_t acc = 0;
        for (size_t len : sched.cycle_lengths) {
            acc += len;
            surrogate.fidelities.push_back(static_cast<double>(acc));
        }
    } else {
        surrogate.fidelities = {static_cast<double>(settings.trainer.total_epochs)};
    }

    std::optional<JournalWriter> writer;
    if (!settings.journal_path.empty()) {
        writer.emplace(settings.journal_path, journal_flush_interval());
        writer->line(meta_json(journal));
    }

    std::mutex aux_mu;
    std::map<uint64_t, TrialRecord> pending; // keyed by per-trial seed
    size_t observed = 0;

    RunOptions ro;
    ro.surrogate = surrogate;
    ro.max_configs = journal.max_configs;
    ro.max_walltime_s = settings.max_walltime_s;
    ro.workers = settings.workers;
    ro.seed = settings.seed;
    ro.multi_fidelity = settings.multi_fidelity;
    ro.eta = settings.eta;
    ro.on_result = [&](const TimedObservation& timed, const Incumbent& inc) {
        TrialRecord rec;
        {
            std::lock_guard<std::mutex> lk(aux_mu);
            auto it = pending.find(timed.seed);
            if (it != pending.end()) {
                rec = std::move(it->second);
                pending.erase(it);
            } else {
                rec.config = timed.obs.config; // objective threw before recording
                rec.objective = timed.obs.objective;
                rec.ok = timed.obs.ok;
                rec.failure_reason = "evaluation aborted";
            }
        }
        rec.id = timed.trial_id;
        rec.seed = timed.seed;
        rec.budget_epochs = timed.obs.fidelity;
        rec.source = timed.obs.source;
        rec.start_ms = timed.start_ms;
        rec.end_ms = timed.end_ms;
        journal.trials.push_back(rec);
        if (writer) writer->line(trial_json(rec));
        // The observation just appended sits at index `observed`; the lead
        // changed iff the incumbent points at it.
        const bool lead_change = inc.valid && inc.observation_index == observed;
        ++observed;
        if (lead_change) {
            IncumbentPoint p;
            p.at_ms = timed.end_ms;
            p.trial_id = timed.trial_id;
            p.objective = inc.objective;
            p.val_loss = rec.val_loss;
            p.val_balanced_accuracy = rec.val_balanced_accuracy;
            p.config = inc.config;
            journal.trajectory.push_back(p);
            if (writer) writer->line(incumbent_json(p));
        }
    };

    const ObjectiveFn objective = [&](const Configuration& c, double fidelity,
                                      uint64_t seed) {
        TrialRecord rec =
            evaluate_config(c, data, seed, static_cast<size_t>(std::llround(fidelity)),
                            settings.trainer, settings.objective);
        {
            std::lock_guard<std::mutex> lk(aux_mu);
            pending[seed] = rec;
        }
        return std::make_pair(rec.objective, rec.ok);
    };

    run_loop(space, objective, ro);
    if (writer) writer->close();
    return journal;
}

std::optional<IncumbentPoint> replay_incumbent(const RunJournal& journal) {
    const double max_budget = static_cast<double>(journal.total_epochs);
    std::optional<IncumbentPoint> best;
    for (const auto& t : journal.trials) {
        if (!t.ok || t.budget_epochs != max_budget) continue;
        if (best && t.objective >= best->objective) continue;
        IncumbentPoint p;
        p.at_ms = t.end_ms;
        p.trial_id = t.id;
        p.objective = t.objective;
        p.val_loss = t.val_loss;
        p.val_balanced_accuracy = t.val_balanced_accuracy;
        p.config = t.config;
        best = std::move(p);
    }
    return best;
}

RefitResult refit_and_test(RunJournal& journal, const SplitDataset& data) {
    const auto inc = replay_incumbent(journal);
    if (!inc) throw ProtocolError("no successful trial to refit from");
    const SplitDataset merged = merge_train_val(data);
    TrainerOptions opts = journal.trainer;
    size_t budget = opts.total_epochs;
    if (opts.early_stopping) {
        // The merged split has no validation rows to monitor; replay the
        // epoch the incumbent trial stopped at.
        for (const auto& t : journal.trials)
            if (t.id == inc->trial_id) budget = t.selected_epoch + 1;
    }
    const TrainResult res =
        train(inc->config, merged.train_val_view(), journal.seed, budget, opts);
    if (res.report.failed)
        throw ProtocolError("refit training failed: " + res.report.failure_reason);
    const Matrix proba = model_predict_proba(res.model, merged.x_test());
    const auto& y_test = merged.y_test();
    RefitResult r;
    r.present = true;
    r.config = inc->config;
    r.epochs = budget;
    r.seed = journal.seed;
    r.test_balanced_accuracy =
        balanced_accuracy(y_test, predict_classes(proba), merged.n_classes);
    r.test_loss = weighted_nll(proba, one_hot(y_test, merged.n_classes),
                               opts.weighted_loss ? merged.class_weights
                                                  : unit_weights(merged.n_classes));
    r.wall_seconds = res.report.wall_seconds;
    journal.refit = r;
    return r;
}

AnytimeSlice anytime_slice(const RunJournal& journal, double cutoff_ms) {
    const double max_budget = static_cast<double>(journal.total_epochs);
    AnytimeSlice slice;
    for (const auto& t : journal.trials) {
        if (t.end_ms > cutoff_ms || !t.ok || t.budget_epochs != max_budget) continue;
        if (slice.any && t.objective >= slice.objective) continue;
        slice.any = true;
        slice.config = t.config;
        slice.objective = t.objective;
        slice.val_loss = t.val_loss;
        slice.val_balanced_accuracy = t.val_balanced_accuracy;
        slice.trial_id = t.id;
        slice.at_ms = t.end_ms;
    }
    return slice;
}

void save_journal(const RunJournal& journal, const std::string& path) {
    JournalWriter writer(path, journal_flush_interval());
    writer.line(meta_json(journal));
    size_t next_point = 0;
    for (const auto& t : journal.trials) {
        writer.line(trial_json(t));
        while (next_point < journal.trajectory.size() &&
               journal.trajectory[next_point].trial_id == t.id) {
            writer.line(incumbent_json(journal.trajectory[next_point]));
            ++next_point;
        }
    }
    for (; next_point < journal.trajectory.size(); ++next_point)
        writer.line(incumbent_json(journal.trajectory[next_point]));
    if (journal.refit.present) writer.line(refit_json(journal.refit));
    writer.close();
}

RunJournal load_journal(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open journal: " + path);
    RunJournal journal;
    bool have_meta = false;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ProtocolError("journal line " + std::to_string(line_no) +
                                " is not valid: " + e.what());
        }
        const std::string kind = j.value("kind", std::string());
        if (kind == "meta") {
            journal.schema_version = j.at("schema_version").get<int>();
            if (journal.schema_version != 1)
                throw ProtocolError("unsupported journal schema version");
            journal.dataset = j.at("dataset").get<std::string>();
            journal.dimensionality = j.at("dimensionality").get<size_t>();
            journal.total_epochs = j.at("epochs").get<size_t>();
            journal.max_configs = j.at("max_configs").get<size_t>();
            journal.max_walltime_s = j.at("max_walltime_s").get<double>();
            journal.objective_metric = j.at("objective").get<std::string>();
            journal.seed = j.at("seed").get<uint64_t>();
            journal.space_json = j.at("space").dump();
            journal.space_fingerprint = j.at("space_fingerprint").get<std::string>();
            journal.started_unix_ms = j.at("started_unix_ms").get<int64_t>();
            journal.trainer = trainer_from_json(j.at("trainer"));
            journal.workers = j.at("workers").get<size_t>();
            have_meta = true;
        } else if (kind == "trial") {
            journal.trials.push_back(trial_from_json(j));
        } else if (kind == "incumbent") {
            journal.trajectory.push_back(incumbent_from_json(j));
        } else if (kind == "refit") {
            journal.refit = refit_from_json(j);
        } else {
            throw ProtocolError("journal line " + std::to_string(line_no) +
                                " has unknown kind");
        }
    }
    if (!have_meta) throw ProtocolError("journal has no meta record: " + path);
    return journal;
}

} // namespace cocktail
