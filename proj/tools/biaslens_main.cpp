#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>

#include "biaslens/bd2a.hpp"
#include "biaslens/biasgen.hpp"
#include "biaslens/dataset.hpp"
#include "biaslens/errors.hpp"
#include "biaslens/eval.hpp"
#include "biaslens/io.hpp"
#include "biaslens/klotski.hpp"
#include "biaslens/log.hpp"
#include "biaslens/pipeline_config.hpp"
#include "biaslens/selector.hpp"

namespace {

using namespace biaslens;
namespace fs = std::filesystem;
using nlohmann::json;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;  // 0 = hardware concurrency
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    auto* opt = cmd->add_option("--config", args.config_path, "pipeline config file");
    if (config_required) opt->required();
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--threads", args.threads, "worker thread cap (0 = auto)");
    cmd->add_option("--out", args.out, "override the stage's output path");
}

PipelineConfig load_config(const CommonArgs& args) {
    PipelineConfig config = load_pipeline_config(args.config_path);
    if (args.seed) config.seed = *args.seed;
    return config;
}

json optional_to_json(const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
}

json metrics_to_json(const Metrics& m) {
    json j;
    j["n"] = m.n;
    j["accuracy"] = optional_to_json(m.accuracy);
    j["precision_pos"] = optional_to_json(m.precision_pos);
    j["recall_pos"] = optional_to_json(m.recall_pos);
    j["precision_neg"] = optional_to_json(m.precision_neg);
    j["recall_neg"] = optional_to_json(m.recall_neg);
    j["roc_auc"] = optional_to_json(m.roc_auc);
    return j;
}

json config_echo(const PipelineConfig& config) {
    json j = json::object();
    for (const KeyValue& kv : config.raw) j[kv.key] = kv.value;
    return j;
}

int cmd_generate(const CommonArgs& args, const std::string& gen_config_path) {
    GenConfig config = load_gen_config(gen_config_path);
    if (args.seed) config.seed = *args.seed;
    if (args.out.empty()) throw UsageError("generate requires --out <directory>");
    const fs::path out_dir(args.out);
    generate(config, out_dir);
    std::error_code ec;
    fs::copy_file(gen_config_path, out_dir / "gen_config.echo", fs::copy_options::overwrite_existing, ec);
    log::info("generated ", config.n_train, "/", config.n_val, "/", config.n_test,
              " samples into ", out_dir.string());
    return 0;
}

int cmd_train_klotski(const CommonArgs& args) {
    const PipelineConfig config = load_config(args);
    const KlotskiConfig kc = to_klotski_config(config, args.threads);
    const Manifest train = load_manifest(config.train_manifest);
    std::optional<Manifest> val;
    if (!config.val_manifest.empty()) val = load_manifest(config.val_manifest);
    const KlotskiResult result = train_klotski(train, kc, val ? &*val : nullptr);
    const fs::path out = args.out.empty() ? config.model_path : fs::path(args.out);
    save_model(out, result.model);
    log::info("trained klotski model: ", result.log.epochs_run, " epochs, final mean loss ",
              result.log.epoch_mean_loss.back(), ", written to ", out.string());
    return 0;
}

int cmd_embed(const CommonArgs& args, const std::string& split_name, const std::string& csv) {
    const PipelineConfig config = load_config(args);
    const KlotskiConfig kc = to_klotski_config(config, args.threads);
    const ScorerModel model = load_model(config.model_path);

    fs::path manifest_path, out;
    if (split_name == "train") {
        manifest_path = config.train_manifest;
        out = config.embeddings_train;
    } else if (split_name == "test") {
        manifest_path = config.test_manifest;
        out = config.embeddings_test;
    } else {
        throw UsageError("--split must be train or test");
    }
    if (!args.out.empty()) out = args.out;

    const Manifest manifest = load_manifest(manifest_path);
    const EmbeddingTable table = extract_table(model, manifest, kc);
    save_table(out, table);
    if (!csv.empty()) export_table_csv(csv, table);
    log::info("embedded ", table.rows.size(), " of ", manifest.entries.size(), " samples (",
              split_name, ") into ", out.string());
    return 0;
}

int cmd_bd2a(const CommonArgs& args) {
    const PipelineConfig config = load_config(args);
    if (!args.out.empty()) {
        throw UsageError("bd2a writes two bundles; set directions_pos/directions_neg in the config");
    }
    const EmbeddingTable table = load_table(config.embeddings_train);
    if (config.k_directions > table.embedding_dim) {
        throw UsageError("k_directions=" + std::to_string(config.k_directions) +
                         " exceeds embedding dimension K=" + std::to_string(table.embedding_dim));
    }
    for (const Polarity polarity : {Polarity::positive, Polarity::negative}) {
        const ScatterPair scatter = compute_scatter(table, polarity);
        const DirectionBundle bundle = solve_directions(scatter, config.k_directions);
        const fs::path out = polarity == Polarity::positive ? config.directions_pos
                                                            : config.directions_neg;
        save_bundle(out, bundle);
        log::info("solved ", config.k_directions, " ", polarity_name(polarity),
                  " directions (lambda_1 = ", bundle.lambdas[0], ") into ", out.string());
    }
    return 0;
}

int cmd_select(const CommonArgs& args, const std::string& source, double theta_override,
               int k_used_override) {
    const PipelineConfig config = load_config(args);
    const double theta = theta_override > 0 ? theta_override : config.theta;
    const int k_used = k_used_override > 0 ? k_used_override : config.k_directions;

    const fs::path table_path =
        source == "train" ? config.embeddings_train : config.embeddings_test;
    const EmbeddingTable table = load_table(table_path);
    const DirectionBundle pos = load_bundle(config.directions_pos);
    const DirectionBundle neg = load_bundle(config.directions_neg);
    const BiasedSplit split =
        select_biased(table, {&pos, &neg}, theta, k_used, config.center);

    fs::path out = source == "train" ? config.split_train : config.split_test;
    if (!args.out.empty()) out = args.out;
    save_split(out, split);
    log::info("selected ", split.biased_ids.size(), " of ", table.rows.size(),
              " samples (theta=", theta, ", k_used=", k_used, ") into ", out.string());
    return 0;
}

int cmd_train_mil(const CommonArgs& args, bool debiased) {
    const PipelineConfig config = load_config(args);
    const KlotskiConfig kc = to_klotski_config(config, args.threads);
    const Manifest train = load_manifest(config.train_manifest);
    std::optional<Manifest> val;
    if (!config.val_manifest.empty()) val = load_manifest(config.val_manifest);

    KlotskiResult result;
    fs::path out;
    if (debiased) {
        const BiasedSplit split = load_split(config.split_train);
        result = retrain_debiased(train, split, kc, val ? &*val : nullptr);
        out = config.debiased_model_path;
    } else {
        result = train_mil(train, kc, val ? &*val : nullptr);
        out = config.mil_model_path;
    }
    if (!args.out.empty()) out = args.out;
    save_model(out, result.model);
    log::info("trained ", result.model.tag, " model: ", result.log.epochs_run,
              " epochs, written to ", out.string());
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& which_model,
             const std::string& dump_predictions) {
    const PipelineConfig config = load_config(args);
    const KlotskiConfig kc = to_klotski_config(config, args.threads);
    const bool debiased = which_model == "debiased";
    const ScorerModel model =
        load_model(debiased ? config.debiased_model_path : config.mil_model_path);
    const Manifest test = load_manifest(config.test_manifest);
    const BiasedSplit split = load_split(config.split_test);

    const auto predictions = predict_mil(model, test, kc);
    if (!dump_predictions.empty()) {
        io::atomic_write(dump_predictions, [&](std::ostream& os) {
            os << "id,label,predicted,score\n";
            char buf[40];
            for (const auto& p : predictions) {
                std::snprintf(buf, sizeof(buf), "%.17g", p.score);
                os << p.id << "," << p.label << "," << p.predicted << "," << buf << "\n";
            }
        });
    }
    const Metrics overall = compute_metrics(predictions);
    const std::string attr_polarity =
        (split.polarity == "positive" || split.polarity == "negative") ? split.polarity : "";
    const DropReport drop = performance_drop(predictions, split, attr_polarity);

    json report;
    report["config"] = config_echo(config);
    report["model"] = debiased ? "debiased" : "mil";
    report["split"] = {{"theta", split.theta},
                       {"k_used", split.k_used},
                       {"polarity", split.polarity},
                       {"n_biased", split.biased_ids.size()}};
    report["overall"] = metrics_to_json(overall);
    report["biased"] = metrics_to_json(drop.biased);
    report["rest"] = metrics_to_json(drop.rest);
    report["drops"] = {{"accuracy", optional_to_json(drop.drop_accuracy)},
                       {"precision_pos", optional_to_json(drop.drop_precision_pos)},
                       {"recall_pos", optional_to_json(drop.drop_recall_pos)},
                       {"precision_neg", optional_to_json(drop.drop_precision_neg)},
                       {"recall_neg", optional_to_json(drop.drop_recall_neg)},
                       {"roc_auc", optional_to_json(drop.drop_auc)}};
    report["attr_precision_drop"] = optional_to_json(drop.attr_precision_drop);
    report["attr_recall_drop"] = optional_to_json(drop.attr_recall_drop);

    fs::path out = debiased ? config.report_debiased_path : config.report_path;
    if (!args.out.empty()) out = args.out;
    io::atomic_write(out, [&](std::ostream& os) { os << report.dump(2) << "\n"; });
    log::info("evaluated ", predictions.size(), " samples; accuracy drop ",
              drop.drop_accuracy ? std::to_string(*drop.drop_accuracy) : "null", "; report at ",
              out.string());
    return 0;
}

int cmd_sweep(const CommonArgs& args, bool include_raw) {
    const PipelineConfig config = load_config(args);
    const KlotskiConfig kc = to_klotski_config(config, args.threads);
    const ScorerModel model = load_model(config.mil_model_path);
    const Manifest test = load_manifest(config.test_manifest);
    const EmbeddingTable train_table = load_table(config.embeddings_train);
    const EmbeddingTable test_table = load_table(config.embeddings_test);
    const DirectionBundle pos = load_bundle(config.directions_pos);
    const DirectionBundle neg = load_bundle(config.directions_neg);

    const auto predictions = predict_mil(model, test, kc);

    std::vector<SweepRow> bd2a_rows;
    for (const DirectionBundle* bundle : {&pos, &neg}) {
        auto rows = attribute_sweep(predictions, test_table, *bundle, config.theta, config.center);
        bd2a_rows.insert(bd2a_rows.end(), rows.begin(), rows.end());
    }
    export_sweep_csv(fs::path(config.sweep_prefix.string() + "_bd2a.csv"), bd2a_rows);

    std::vector<SweepRow> pca_rows;
    for (const Polarity polarity : {Polarity::positive, Polarity::negative}) {
        const DirectionBundle pca = pca_directions(train_table, polarity, config.k_directions);
        auto rows = attribute_sweep(predictions, test_table, pca, config.theta, config.center);
        pca_rows.insert(pca_rows.end(), rows.begin(), rows.end());
    }
    export_sweep_csv(fs::path(config.sweep_prefix.string() + "_pca.csv"), pca_rows);

    if (include_raw) {
        const auto raw_rows =
            raw_coordinate_sweep(predictions, test_table, config.theta, config.center);
        export_sweep_csv(fs::path(config.sweep_prefix.string() + "_raw.csv"), raw_rows);
    }
    log::info("sweep written to ", config.sweep_prefix.string(), "_{bd2a,pca",
              include_raw ? ",raw" : "", "}.csv");
    return 0;
}

int cmd_curve(const CommonArgs& args, int k_max_override) {
    const PipelineConfig config = load_config(args);
    const EmbeddingTable table = load_table(config.embeddings_train);
    const int k_max = k_max_override > 0 ? k_max_override : config.k_directions;
    if (k_max > table.embedding_dim) {
        throw UsageError("k_max=" + std::to_string(k_max) + " exceeds embedding dimension K=" +
                         std::to_string(table.embedding_dim));
    }
    for (const Polarity polarity : {Polarity::positive, Polarity::negative}) {
        const ScatterPair scatter = compute_scatter(table, polarity);
        const auto curve = criterion_curve(scatter, k_max);
        const fs::path out(config.curve_prefix.string() + "_" + polarity_name(polarity) + ".csv");
        export_curve_csv(out, curve);
        log::info("criterion curve (", polarity_name(polarity), ") written to ", out.string());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"biaslens: background-bias discovery pipeline for labeled image datasets"};
    app.require_subcommand(1);

    CommonArgs generate_args, klotski_args, embed_args, bd2a_args, select_args, mil_args,
        eval_args, sweep_args, curve_args;

    auto* generate = app.add_subcommand("generate", "render a synthetic biased dataset");
    std::string gen_config;
    generate->add_option("--config", gen_config, "generator config file")->required();
    generate->add_option("--seed", generate_args.seed, "override the config seed");
    generate->add_option("--out", generate_args.out, "output directory")->required();
    generate->add_option("--threads", generate_args.threads, "worker thread cap (unused)");

    auto* train_klotski = app.add_subcommand("train-klotski", "train the background-only scorer");
    add_common(train_klotski, klotski_args);

    auto* embed = app.add_subcommand("embed", "extract key-tile embeddings");
    add_common(embed, embed_args);
    std::string embed_split = "train";
    std::string embed_csv;
    embed->add_option("--split", embed_split, "which manifest to embed (train|test)");
    embed->add_option("--csv", embed_csv, "also export the table as CSV");

    auto* bd2a = app.add_subcommand("bd2a", "solve discriminant directions per polarity");
    add_common(bd2a, bd2a_args);

    auto* select = app.add_subcommand("select", "build the biased/rest split");
    add_common(select, select_args);
    std::string select_source = "test";
    double select_theta = -1.0;
    int select_k_used = -1;
    select->add_option("--source", select_source, "embeddings to select from (test|train)");
    select->add_option("--theta", select_theta, "override theta");
    select->add_option("--k-used", select_k_used, "override direction count");

    auto* train_mil_cmd = app.add_subcommand("train-mil", "train the downstream MIL classifier");
    add_common(train_mil_cmd, mil_args);
    bool mil_debiased = false;
    train_mil_cmd->add_flag("--debiased", mil_debiased,
                            "train on the manifest minus the train-split biased ids");

    auto* eval_cmd = app.add_subcommand("eval", "report metrics and drops on the test split");
    add_common(eval_cmd, eval_args);
    std::string eval_model = "mil";
    std::string eval_dump;
    eval_cmd->add_option("--model", eval_model, "which model to evaluate (mil|debiased)");
    eval_cmd->add_option("--dump-predictions", eval_dump, "also write per-sample predictions CSV");

    auto* sweep = app.add_subcommand("sweep", "per-direction drops for bd2a/pca/raw attributes");
    add_common(sweep, sweep_args);
    bool sweep_raw = true;
    sweep->add_flag("--raw,!--no-raw", sweep_raw, "include raw-coordinate directions");

    auto* curve = app.add_subcommand("curve", "criterion-vs-k curve per polarity");
    add_common(curve, curve_args);
    int curve_k_max = -1;
    curve->add_option("--k-max", curve_k_max, "directions to trace (default k_directions)");

    try {
        app.parse(argc, argv);
        if (generate->parsed()) return cmd_generate(generate_args, gen_config);
        if (train_klotski->parsed()) return cmd_train_klotski(klotski_args);
        if (embed->parsed()) return cmd_embed(embed_args, embed_split, embed_csv);
        if (bd2a->parsed()) return cmd_bd2a(bd2a_args);
        if (select->parsed()) return cmd_select(select_args, select_source, select_theta,
                                                select_k_used);
        if (train_mil_cmd->parsed()) return cmd_train_mil(mil_args, mil_debiased);
        if (eval_cmd->parsed()) return cmd_eval(eval_args, eval_model, eval_dump);
        if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_raw);
        if (curve->parsed()) return cmd_curve(curve_args, curve_k_max);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const biaslens::UsageError& e) {
        biaslens::log::error(e.what());
        return 1;
    } catch (const biaslens::NumericError& e) {
        biaslens::log::error(e.what());
        return 3;
    } catch (const biaslens::DataError& e) {
        biaslens::log::error(e.what());
        return 2;
    } catch (const std::exception& e) {
        biaslens::log::error(e.what());
        return 2;
    }
}
