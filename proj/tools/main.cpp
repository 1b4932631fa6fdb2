#include "CLI11.hpp"
#include "json.hpp"

#include "cocktail/augmentation.hpp"
#include "cocktail/bohb.hpp"
#include "cocktail/config_space.hpp"
#include "cocktail/dataset.hpp"
#include "cocktail/errors.hpp"
#include "cocktail/protocol.hpp"
#include "cocktail/stats.hpp"
#include "cocktail/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace cocktail;
using nlohmann::json;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open file for writing: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

std::string swap_extension(const std::string& path, const std::string& ext) {
    const size_t slash = path.find_last_of("/\\");
    const size_t dot = path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return path + ext;
    return path.substr(0, dot) + ext;
}

SplitDataset load_split(const std::string& csv, const std::string& meta, uint64_t seed) {
    const std::string meta_path = meta.empty() ? swap_extension(csv, ".json") : meta;
    RawDataset raw = load_csv(csv, meta_path);
    if (raw.has_missing()) raw = impute(raw);
    return encode_and_split(raw, seed);
}

void add_backbone_options(CLI::App* cmd, TrainerOptions& t) {
    cmd->add_option("--layers", t.n_layers, "Weight layers in the backbone")
        ->capture_default_str();
    cmd->add_option("--width", t.width, "Hidden layer width")->capture_default_str();
    cmd->add_option("--batch", t.batch_size, "Mini-batch size")->capture_default_str();
    cmd->add_option("--lr", t.base_lr, "Base learning rate (overridden when the "
                                       "configuration carries learning_rate)")
        ->capture_default_str();
    cmd->add_option("--cycle", t.initial_cycle, "First cosine cycle length in epochs")
        ->capture_default_str();
    cmd->add_option("--cycle-mult", t.cycle_multiplier, "Cycle length multiplier")
        ->capture_default_str();
    cmd->add_flag("--early-stopping", t.early_stopping,
                  "Track and return the best validation-accuracy epoch");
    cmd->add_flag_function(
        "--unweighted-loss", [&t](int64_t) { t.weighted_loss = false; },
        "Disable class-weighted loss");
}

json report_json(const TrainReport& rep) {
    return json{{"failed", rep.failed},
                {"failure_reason", rep.failure_reason},
                {"final_val_balanced_accuracy", rep.final_val_balanced_accuracy},
                {"final_val_loss", rep.final_val_loss},
                {"selected_epoch", rep.selected_epoch},
                {"train_loss", rep.train_loss},
                {"val_balanced_accuracy", rep.val_balanced_accuracy},
                {"val_loss", rep.val_loss},
                {"wall_seconds", rep.wall_seconds}};
}

// method label for grouped journals: explicit label option wins, else the
// space fingerprint identifies runs of the same space as one method.
std::string journal_method(const RunJournal& j) {
    return "space-" + j.space_fingerprint.substr(0, 8);
}

AnytimeCurve curve_from_journal(const RunJournal& j) {
    AnytimeCurve c;
    for (const auto& p : j.trajectory) {
        c.times.push_back(p.at_ms / 1000.0);
        c.metrics.push_back(p.val_balanced_accuracy);
    }
    return c;
}

int run(int argc, char** argv) {
    CLI::App app{"Regularization-cocktail MLP training, per-dataset hyperparameter "
                 "search, and statistical comparison toolkit"};
    app.require_subcommand(1);
    int exit_code = 0;

    // ---- space ----------------------------------------------------------
    auto* sp = app.add_subcommand("space", "Print, export, sample, or validate the "
                                           "hyperparameter space");
    bool sp_tune_lr = false;
    std::string sp_export, sp_validate;
    size_t sp_sample = 0;
    uint64_t sp_seed = 11;
    sp->add_flag("--tune-lr", sp_tune_lr, "Add the learning-rate hyperparameter");
    sp->add_option("--export", sp_export, "Write the space definition JSON here");
    sp->add_option("--validate", sp_validate, "Validate a configuration JSON file");
    sp->add_option("--sample", sp_sample, "Print this many sampled configurations");
    sp->add_option("--seed", sp_seed, "Sampling seed")->capture_default_str();
    sp->callback([&] {
        const SearchSpace space = cocktail_space({sp_tune_lr});
        bool acted = false;
        if (!sp_export.empty()) {
            write_file(sp_export, space.to_json());
            std::cout << "space written to " << sp_export << "\n";
            acted = true;
        }
        if (!sp_validate.empty()) {
            const Configuration cfg = config_from_json(read_file(sp_validate));
            const auto violations = space.validate(cfg);
            if (violations.empty()) {
                std::cout << "valid\n";
            } else {
                for (const auto& v : violations) std::cout << "violation: " << v << "\n";
                exit_code = 2;
            }
            acted = true;
        }
        if (sp_sample > 0) {
            Rng rng(sp_seed);
            for (size_t i = 0; i < sp_sample; ++i)
                std::cout << config_to_json(space.sample(rng)) << "\n";
            acted = true;
        }
        if (!acted) std::cout << space.describe();
    });

    // ---- hpo -------------------------------------------------------------
    auto* hp = app.add_subcommand("hpo", "Search the cocktail space on one dataset");
    std::string hp_data, hp_meta, hp_journal, hp_objective = "val_loss";
    uint64_t hp_seed = 11;
    size_t hp_workers = 10, hp_max_configs = 0;
    double hp_walltime = 0.0, hp_eta = 3.0;
    bool hp_tune_lr = false, hp_multi = false, hp_refit = false;
    TrainerOptions hp_trainer;
    hp->add_option("--data", hp_data, "Dataset CSV path")->required();
    hp->add_option("--meta", hp_meta, "Column metadata JSON (default: CSV path with "
                                      ".json extension)");
    hp->add_option("--journal", hp_journal,
                   "Journal output path (default: CSV path with .journal.jsonl)");
    hp->add_option("--seed", hp_seed, "Run seed")->capture_default_str();
    hp->add_option("--workers", hp_workers, "Concurrent trial evaluations")
        ->capture_default_str();
    hp->add_option("--max-configs", hp_max_configs,
                   "Trial budget (0 = 40 x space dimensionality)")
        ->capture_default_str();
    hp->add_option("--max-walltime", hp_walltime, "Wall-clock budget in seconds "
                                                  "(0 = unlimited)")
        ->capture_default_str();
    hp->add_option("--epochs", hp_trainer.total_epochs, "Full training budget")
        ->capture_default_str();
    hp->add_option("--objective", hp_objective,
                   "val_loss or one_minus_balanced_accuracy")
        ->capture_default_str();
    hp->add_flag("--tune-lr", hp_tune_lr, "Search the learning rate too");
    hp->add_flag("--multi-fidelity", hp_multi,
                 "Run successive-halving brackets over the cycle boundaries");
    hp->add_option("--eta", hp_eta, "Halving rate for --multi-fidelity")
        ->capture_default_str();
    hp->add_flag("--refit", hp_refit, "Refit the incumbent on train+val and score "
                                      "the test split afterwards");
    add_backbone_options(hp, hp_trainer);
    hp->callback([&] {
        const SplitDataset split = load_split(hp_data, hp_meta, hp_seed);
        const SearchSpace space = cocktail_space({hp_tune_lr});
        SearchSettings s;
        s.trainer = hp_trainer;
        s.max_configs = hp_max_configs;
        s.max_walltime_s = hp_walltime;
        s.workers = hp_workers;
        s.seed = hp_seed;
        s.objective = objective_metric_from_name(hp_objective);
        s.multi_fidelity = hp_multi;
        s.eta = hp_eta;
        s.journal_path =
            hp_journal.empty() ? swap_extension(hp_data, ".journal.jsonl") : hp_journal;
        RunJournal journal = search(split, space, s);
        size_t ok = 0;
        for (const auto& t : journal.trials) ok += t.ok ? 1 : 0;
        std::cout << "dataset: " << split.name << " (" << split.x_train.rows
                  << " train / " << split.x_val.rows << " val rows, "
                  << split.n_classes << " classes)\n"
                  << "trials: " << journal.trials.size() << " (" << ok << " ok, "
                  << journal.trials.size() - ok << " failed)\n";
        if (journal.trajectory.empty()) {
            std::cout << "incumbent: none (no successful trial)\n";
            if (hp_refit) throw ProtocolError("no successful trial to refit from");
        } else {
            const auto& inc = journal.trajectory.back();
            std::cout << "incumbent: trial " << inc.trial_id
                      << " objective=" << inc.objective
                      << " val_balanced_accuracy=" << inc.val_balanced_accuracy << "\n"
                      << "incumbent config: " << config_to_json(inc.config) << "\n";
        }
        if (hp_refit) {
            const RefitResult r = refit_and_test(journal, split);
            save_journal(journal, s.journal_path);
            std::cout << "refit: test_balanced_accuracy=" << r.test_balanced_accuracy
                      << " test_loss=" << r.test_loss << "\n";
        }
        std::cout << "journal: " << s.journal_path << "\n";
    });

    // ---- train -----------------------------------------------------------
    auto* tr = app.add_subcommand("train", "Train one configuration and report "
                                           "validation metrics");
    std::string tr_config, tr_data, tr_meta, tr_model, tr_report;
    uint64_t tr_seed = 11;
    size_t tr_budget = 0;
    TrainerOptions tr_trainer;
    tr->add_option("--config", tr_config, "Configuration JSON file")->required();
    tr->add_option("--data", tr_data, "Dataset CSV path")->required();
    tr->add_option("--meta", tr_meta, "Column metadata JSON");
    tr->add_option("--seed", tr_seed, "Seed")->capture_default_str();
    tr->add_option("--epochs", tr_trainer.total_epochs, "Schedule span in epochs")
        ->capture_default_str();
    tr->add_option("--budget", tr_budget, "Epochs to actually run (0 = all)")
        ->capture_default_str();
    tr->add_option("--model", tr_model, "Write the trained model here");
    tr->add_option("--report", tr_report, "Write the report JSON here");
    add_backbone_options(tr, tr_trainer);
    tr->callback([&] {
        const SplitDataset split = load_split(tr_data, tr_meta, tr_seed);
        const Configuration cfg = config_from_json(read_file(tr_config));
        const SearchSpace space =
            cocktail_space({cfg.count("learning_rate") > 0}); // match the file's shape
        const auto violations = space.validate(cfg);
        if (!violations.empty()) {
            std::string msg = "configuration invalid:";
            for (const auto& v : violations) msg += "\n  - " + v;
            throw IngestionError(msg);
        }
        const size_t budget = tr_budget > 0 ? tr_budget : tr_trainer.total_epochs;
        const TrainResult res =
            train(cfg, split.train_val_view(), tr_seed, budget, tr_trainer);
        const json rep = report_json(res.report);
        std::cout << rep.dump(2) << "\n";
        if (!tr_report.empty()) write_file(tr_report, rep.dump(2) + "\n");
        if (res.report.failed) {
            exit_code = 3;
            return;
        }
        if (!tr_model.empty()) {
            save_model(res.model, tr_model);
            std::cout << "model written to " << tr_model << "\n";
        }
    });

    // ---- refit -----------------------------------------------------------
    auto* rf = app.add_subcommand("refit", "Retrain a journal's incumbent on "
                                           "train+val and score the test split");
    std::string rf_journal, rf_data, rf_meta, rf_model;
    rf->add_option("--journal", rf_journal, "Journal path")->required();
    rf->add_option("--data", rf_data, "Dataset CSV path")->required();
    rf->add_option("--meta", rf_meta, "Column metadata JSON");
    rf->add_option("--model", rf_model, "Write the refit model here");
    rf->callback([&] {
        RunJournal journal = load_journal(rf_journal);
        const SplitDataset split = load_split(rf_data, rf_meta, journal.seed);
        const RefitResult r = refit_and_test(journal, split);
        save_journal(journal, rf_journal);
        std::cout << "test_balanced_accuracy=" << r.test_balanced_accuracy
                  << " test_loss=" << r.test_loss << " epochs=" << r.epochs << "\n";
        if (!rf_model.empty()) {
            // re-run the refit training to materialize the model
            const SplitDataset merged = merge_train_val(split);
            const TrainResult res = train(r.config, merged.train_val_view(),
                                          journal.seed, r.epochs, journal.trainer);
            save_model(res.model, rf_model);
            std::cout << "model written to " << rf_model << "\n";
        }
    });

    // ---- evaluate ---------------------------------------------------------
    auto* ev = app.add_subcommand("evaluate", "Score a saved model on a dataset "
                                              "split");
    std::string ev_model, ev_data, ev_meta, ev_split = "test";
    uint64_t ev_seed = 11;
    ev->add_option("--model", ev_model, "Model checkpoint path")->required();
    ev->add_option("--data", ev_data, "Dataset CSV path")->required();
    ev->add_option("--meta", ev_meta, "Column metadata JSON");
    ev->add_option("--split", ev_split, "train, val, or test")->capture_default_str();
    ev->add_option("--seed", ev_seed, "Split seed (must match the training run)")
        ->capture_default_str();
    ev->callback([&] {
        const SplitDataset split = load_split(ev_data, ev_meta, ev_seed);
        const TrainedModel model = load_model(ev_model);
        const Matrix* x = nullptr;
        const std::vector<int>* y = nullptr;
        if (ev_split == "train") {
            x = &split.x_train;
            y = &split.y_train;
        } else if (ev_split == "val") {
            x = &split.x_val;
            y = &split.y_val;
        } else if (ev_split == "test") {
            x = &split.x_test();
            y = &split.y_test();
        } else {
            throw IngestionError("unknown split: " + ev_split);
        }
        if (x->rows == 0) throw IngestionError("split '" + ev_split + "' is empty");
        const Matrix proba = model_predict_proba(model, *x);
        const double ba = balanced_accuracy(*y, predict_classes(proba), split.n_classes);
        const double loss = weighted_nll(proba, one_hot(*y, split.n_classes),
                                         std::vector<double>(split.n_classes, 1.0));
        std::cout << "split=" << ev_split << " rows=" << x->rows
                  << " balanced_accuracy=" << ba << " loss=" << loss << "\n";
    });

    // ---- compare -----------------------------------------------------------
    auto* cp = app.add_subcommand("compare", "Signed-rank tests, mean ranks, and "
                                             "critical-difference groups for a "
                                             "score table");
    std::string cp_table, cp_plot;
    double cp_alpha = 0.05;
    cp->add_option("--table", cp_table, "Score CSV: header 'dataset,<method>,...', "
                                        "one row per dataset")
        ->required();
    cp->add_option("--alpha", cp_alpha, "Significance level")->capture_default_str();
    cp->add_option("--plot-data", cp_plot, "Write plot-ready JSON here");
    cp->callback([&] {
        const ScoreTable table = score_table_from_csv(read_file(cp_table));
        const CdReport report = cd_groups(table, cp_alpha);
        std::cout << "mean ranks (" << table.datasets.size() << " datasets):\n";
        for (size_t m = 0; m < report.methods.size(); ++m)
            std::cout << "  " << report.methods[m] << ": " << report.mean_rank[m]
                      << "\n";
        std::cout << "pairwise signed-rank tests (alpha=" << cp_alpha << ", Holm):\n";
        for (const auto& pc : report.pairs) {
            const auto& t = pc.test;
            std::cout << "  " << report.methods[pc.a] << " vs " << report.methods[pc.b]
                      << ": W=" << t.statistic << " p=" << t.p_value
                      << " p_holm=" << pc.p_holm << " wins/ties/losses=" << t.wins
                      << "/" << t.ties << "/" << t.losses
                      << (t.exact ? " (exact)" : " (normal)")
                      << (pc.significant ? " significant" : "") << "\n";
        }
        std::cout << "groups (no significant difference inside):\n";
        for (const auto& clique : report.cliques) {
            std::cout << "  {";
            for (size_t i = 0; i < clique.size(); ++i)
                std::cout << (i ? ", " : " ") << report.methods[clique[i]];
            std::cout << " }\n";
        }
        if (!cp_plot.empty()) {
            json pairs = json::array();
            for (const auto& pc : report.pairs)
                pairs.push_back({{"a", report.methods[pc.a]},
                                 {"b", report.methods[pc.b]},
                                 {"p", pc.test.p_value},
                                 {"p_holm", pc.p_holm},
                                 {"significant", pc.significant},
                                 {"statistic", pc.test.statistic}});
            const json out{{"alpha", report.alpha},
                           {"cliques", report.cliques},
                           {"mean_rank", report.mean_rank},
                           {"methods", report.methods},
                           {"pairs", pairs}};
            write_file(cp_plot, out.dump(2) + "\n");
        }
    });

    // ---- frequencies --------------------------------------------------------
    auto* fq = app.add_subcommand("frequencies", "Count which techniques the "
                                                 "incumbents switched on");
    std::vector<std::string> fq_journals;
    std::string fq_json;
    fq->add_option("journals", fq_journals, "Journal files")->required();
    fq->add_option("--json", fq_json, "Write the report JSON here");
    fq->callback([&] {
        std::vector<Configuration> incumbents;
        for (const auto& path : fq_journals) {
            const RunJournal j = load_journal(path);
            const auto inc = replay_incumbent(j);
            if (!inc) throw ProtocolError("journal has no incumbent: " + path);
            incumbents.push_back(inc->config);
        }
        const FrequencyReport rep = regularizer_frequencies(incumbents);
        std::cout << "runs: " << rep.n_runs << "\n" << "regularizers:\n";
        for (const auto& [name, count] : rep.regularizer)
            std::cout << "  " << name << ": " << count << "\n";
        std::cout << "families:\n";
        for (const auto& [name, count] : rep.family)
            std::cout << "  " << name << ": " << count << "\n";
        if (!fq_json.empty()) {
            const json out{{"family", rep.family},
                           {"n_runs", rep.n_runs},
                           {"regularizer", rep.regularizer}};
            write_file(fq_json, out.dump(2) + "\n");
        }
    });

    // ---- anytime --------------------------------------------------------------
    auto* an = app.add_subcommand("anytime", "Incumbent-over-time slices and mean "
                                             "ranks at wall-clock cutoffs");
    std::vector<std::string> an_journals;
    std::vector<double> an_cutoffs;
    std::string an_plot;
    an->add_option("journals", an_journals, "Journal files")->required();
    an->add_option("--cutoffs", an_cutoffs, "Cutoffs in seconds from run start")
        ->required();
    an->add_option("--plot-data", an_plot, "Write plot-ready JSON here");
    an->callback([&] {
        std::vector<RunJournal> loaded;
        for (const auto& path : an_journals) loaded.push_back(load_journal(path));
        // methods = distinct spaces (by fingerprint); datasets = journal names
        std::vector<std::string> methods, datasets;
        for (const auto& j : loaded) {
            const std::string m = journal_method(j);
            if (std::find(methods.begin(), methods.end(), m) == methods.end())
                methods.push_back(m);
            if (std::find(datasets.begin(), datasets.end(), j.dataset) ==
                datasets.end())
                datasets.push_back(j.dataset);
        }
        std::vector<std::vector<AnytimeCurve>> curves(
            methods.size(), std::vector<AnytimeCurve>(datasets.size()));
        for (const auto& j : loaded) {
            const size_t m = static_cast<size_t>(
                std::find(methods.begin(), methods.end(), journal_method(j)) -
                methods.begin());
            const size_t d = static_cast<size_t>(
                std::find(datasets.begin(), datasets.end(), j.dataset) -
                datasets.begin());
            curves[m][d] = curve_from_journal(j);
        }
        const RankOverTime rot = rank_over_time(methods, datasets, curves, an_cutoffs);
        for (const auto& j : loaded) {
            std::cout << "journal " << j.dataset << " [" << journal_method(j) << "]:\n";
            for (double c : an_cutoffs) {
                const AnytimeSlice s = anytime_slice(j, c * 1000.0);
                if (!s.any) {
                    std::cout << "  t=" << c << "s: no configuration evaluated\n";
                } else {
                    std::cout << "  t=" << c << "s: trial " << s.trial_id
                              << " objective=" << s.objective
                              << " val_balanced_accuracy=" << s.val_balanced_accuracy
                              << "\n";
                }
            }
        }
        std::cout << "mean ranks over time (validation balanced accuracy):\n";
        for (size_t m = 0; m < rot.methods.size(); ++m) {
            std::cout << "  " << rot.methods[m] << ":";
            for (size_t c = 0; c < rot.cutoffs.size(); ++c) {
                const double v = rot.mean_rank(m, c);
                if (std::isnan(v))
                    std::cout << " -";
                else
                    std::cout << " " << v << " (" << rot.datasets_used[m][c] << " ds)";
            }
            std::cout << "\n";
        }
        if (!an_plot.empty()) {
            json ranks = json::array();
            for (size_t m = 0; m < rot.methods.size(); ++m) {
                json row = json::array();
                for (size_t c = 0; c < rot.cutoffs.size(); ++c) {
                    const double v = rot.mean_rank(m, c);
                    if (std::isnan(v))
                        row.push_back(nullptr);
                    else
                        row.push_back(v);
                }
                ranks.push_back(std::move(row));
            }
            const json out{{"cutoffs_s", rot.cutoffs},
                           {"datasets", datasets},
                           {"datasets_used", rot.datasets_used},
                           {"mean_rank", ranks},
                           {"methods", rot.methods}};
            write_file(an_plot, out.dump(2) + "\n");
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    return exit_code;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const IngestionError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
