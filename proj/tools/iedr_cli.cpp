// Command-line front end: dataset conversion, training, evaluation, ablation
// sweeps, representation export, MI probing and synthetic data generation.
//
// Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <iedr/iedr.hpp>

namespace fs = std::filesystem;
using namespace iedr;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LoadedData {
    Vocabulary vocab;
    std::vector<Instance> instances;
    Split split;
    std::unique_ptr<ItemCatalog> catalog;
    UserHistory history;
};

LoadedData load_dataset(const std::string& path, const RunConfig& cfg,
                        std::optional<Vocabulary> vocab = std::nullopt) {
    LoadedData d;
    auto [v, inst] = ingest_tsv(path, std::move(vocab));
    d.vocab = std::move(v);
    d.instances = std::move(inst);
    d.split = split_leave_last_two(d.instances, cfg.to_split_spec());
    d.catalog = std::make_unique<ItemCatalog>(d.instances);
    d.history = user_item_history(d.split.train, *d.catalog);
    return d;
}

std::vector<Instance> augmented_train(const LoadedData& d, const RunConfig& cfg) {
    RngStream rng(cfg.seed, "data.negatives");
    return augment_with_negatives(d.split.train, *d.catalog, cfg.train_negatives, rng);
}

struct TrainedRun {
    std::unique_ptr<IedrModel> model;
    FitResult fit;
};

TrainedRun run_training(const RunConfig& cfg, const LoadedData& data) {
    TrainedRun run;
    run.model = std::make_unique<IedrModel>(data.vocab.size(), cfg.to_model_config());
    Trainer trainer(*run.model, cfg.to_train_options());
    run.fit = trainer.fit(augmented_train(data, cfg), data.split.valid, *data.catalog,
                          data.history);
    if (trainer.neggen_fallback_warned())
        std::cerr << "warning: NegGen1 fell back to dropout on batches with identical contexts\n";
    return run;
}

void write_run_outputs(const fs::path& out, const RunConfig& cfg, const TrainedRun& run,
                       const Vocabulary& vocab) {
    fs::create_directories(out);
    save_checkpoint(out / "checkpoint", run.model->params(), cfg.hash());
    {
        std::ofstream f(out / "config.json", std::ios::trunc);
        f << cfg.to_json().dump(2) << '\n';
    }
    vocab.save((out / "vocabulary.tsv").string());
    {
        std::ofstream f(out / "train_log.csv", std::ios::trunc);
        write_training_log(f, run.fit.log);
    }
}

/// Rebuilds a model + vocabulary from a training output directory.
struct LoadedRun {
    RunConfig cfg;
    Vocabulary vocab;
    std::unique_ptr<IedrModel> model;
};

LoadedRun load_run(const std::string& dir) {
    LoadedRun r;
    r.cfg = RunConfig::load((fs::path(dir) / "config.json").string());
    r.vocab = Vocabulary::load((fs::path(dir) / "vocabulary.tsv").string());
    r.model = std::make_unique<IedrModel>(r.vocab.size(), r.cfg.to_model_config());
    auto hash = load_checkpoint(fs::path(dir) / "checkpoint", r.model->params());
    if (hash != r.cfg.hash())
        std::cerr << "warning: checkpoint config hash " << hash << " != config.json hash "
                  << r.cfg.hash() << "\n";
    return r;
}

RunConfig variant_config(RunConfig base, const std::string& variant) {
    if (variant == "IEDR") return base;
    if (variant == "noCL") {
        base.cicl_enabled = false;
    } else if (variant == "noDis") {
        base.dis_mode = "off";
    } else if (variant == "noCIED") {
        base.cicl_enabled = false;
        base.dis_mode = "off";
    } else if (variant == "vCLUB") {
        base.dis_mode = "vCLUB";
    } else if (variant == "Linear") {
        base.factor_variant = "Linear";
        base.combine = "concat";
    } else if (variant == "Nonlinear") {
        base.factor_variant = "Nonlinear";
        base.combine = "concat";
    } else if (variant == "Split") {
        base.factor_variant = "Split";
    } else if (variant == "AVG" || variant == "MLP" || variant == "BI" || variant == "SIGN") {
        base.encoder = variant;
    } else {
        throw UsageError("unknown ablation variant: " + variant);
    }
    return base;
}

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::string tok;
    std::istringstream ss(s);
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

// --- converters -------------------------------------------------------------

std::vector<std::string> parse_header(const std::string& line, char sep) {
    std::vector<std::string> cols;
    std::string tok;
    std::istringstream ss(line);
    while (std::getline(ss, tok, sep)) cols.push_back(tok);
    return cols;
}

void convert_generic(const std::string& in_path, const std::string& out_path,
                     const std::string& user_cols, const std::string& item_cols,
                     const std::string& context_cols, const std::string& label_col,
                     const std::string& order_col, const std::string& user_key_col,
                     const std::string& item_key_col, const std::string& time_bucket_col) {
    std::ifstream in(in_path);
    if (!in) throw std::runtime_error("cannot open input: " + in_path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty input: " + in_path);
    const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
    auto header = parse_header(line, sep);
    auto col_index = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw std::runtime_error("missing column: " + name);
        return static_cast<std::size_t>(it - header.begin());
    };
    auto indices = [&](const std::string& names) {
        std::vector<std::pair<std::string, std::size_t>> out;
        for (const auto& n : split_csv_list(names)) out.emplace_back(n, col_index(n));
        return out;
    };
    auto ucols = indices(user_cols);
    auto icols = indices(item_cols);
    auto ccols = indices(context_cols);
    if (ucols.empty() || icols.empty())
        throw UsageError("convert: need at least one user and one item column");
    const std::size_t ukey = col_index(user_key_col.empty() ? ucols[0].first : user_key_col);
    const std::size_t ikey = col_index(item_key_col.empty() ? icols[0].first : item_key_col);
    std::optional<std::size_t> label_i, order_i, bucket_i;
    if (!label_col.empty()) label_i = col_index(label_col);
    if (!order_col.empty()) order_i = col_index(order_col);
    if (!time_bucket_col.empty()) bucket_i = col_index(time_bucket_col);

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write output: " + out_path);
    std::size_t lineno = 1;
    long long order = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = parse_header(line, sep);
        if (cells.size() != header.size())
            throw std::runtime_error("line " + std::to_string(lineno) + ": expected " +
                                     std::to_string(header.size()) + " columns");
        auto feats = [&](const std::vector<std::pair<std::string, std::size_t>>& cols) {
            std::string s;
            for (std::size_t k = 0; k < cols.size(); ++k) {
                if (k) s += ',';
                s += cols[k].first + ":" + cells[cols[k].second];
            }
            return s;
        };
        std::string context = feats(ccols);
        if (bucket_i) {
            std::string bucket;
            try {
                bucket = bucketize_time(std::stoll(cells[*bucket_i]));
            } catch (const std::exception&) {
                throw std::runtime_error("line " + std::to_string(lineno) + ": bad timestamp");
            }
            context += (context.empty() ? "" : ",");
            context += "time_bucket:" + bucket;
        }
        if (context.empty())
            throw std::runtime_error("line " + std::to_string(lineno) + ": no context features");
        out << (label_i ? cells[*label_i] : "1") << '\t' << cells[ukey] << '\t' << cells[ikey]
            << '\t' << (order_i ? cells[*order_i] : std::to_string(order)) << '\t' << feats(ucols)
            << '\t' << feats(icols) << '\t' << context << '\n';
        ++order;
    }
}

void convert_frappe(const std::string& in_path, const std::string& out_path) {
    // Frappe usage-log layout: user, item and the eight context columns.
    convert_generic(in_path, out_path, "user", "item",
                    "daytime,weekday,isweekend,homework,cost,weather,country,city",
                    /*label=*/"", /*order=*/"", "user", "item", /*bucket=*/"");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Intrinsic-extrinsic disentangled recommendation toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, checkpoint_path, seed_str, preset;
    std::vector<std::string> overrides;

    auto add_config_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--preset", preset, "dataset preset: frappe|yelp|amazon|synthetic");
        cmd->add_option("--set", overrides, "override, e.g. --set train.lr=0.01");
        cmd->add_option("--seed", seed_str, "root seed override");
    };
    auto build_config = [&]() {
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        if (!preset.empty()) cfg.apply_preset(preset);
        for (const auto& o : overrides) cfg.set(o);
        if (!seed_str.empty()) cfg.set("train.seed=" + seed_str);
        return cfg;
    };

    // --- train ---
    auto* cmd_train = app.add_subcommand("train", "fit a model and write a checkpoint");
    add_config_flags(cmd_train);
    cmd_train->add_option("--data", data_path, "canonical TSV dataset")->required();
    cmd_train->add_option("--out", out_path, "output directory")->required();
    cmd_train->callback([&] {
        auto cfg = build_config();
        auto data = load_dataset(data_path, cfg);
        auto run = run_training(cfg, data);
        write_run_outputs(out_path, cfg, run, data.vocab);
        std::cout << "best_val_ndcg10=" << run.fit.best_val_ndcg10 << " best_epoch="
                  << run.fit.best_epoch << " config_hash=" << cfg.hash() << "\n";
    });

    // --- eval ---
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    cmd_eval->add_option("--checkpoint", checkpoint_path, "training output directory")->required();
    cmd_eval->add_option("--data", data_path, "canonical TSV dataset")->required();
    cmd_eval->add_option("--out", out_path, "metrics CSV path")->required();
    cmd_eval->callback([&] {
        auto run = load_run(checkpoint_path);
        auto data = load_dataset(data_path, run.cfg, run.vocab);
        bool reduced = false;
        auto metrics = evaluate(*run.model, data.split.test, *data.catalog, data.history,
                                run.cfg.to_train_options().eval, &reduced);
        if (reduced) std::cerr << "warning: candidate count reduced (small item catalog)\n";
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + out_path);
        write_metrics_csv(f, metrics);
        std::cout << "ndcg10=" << metrics.ndcg10 << " auc=" << metrics.auc << "\n";
    });

    // --- ablate ---
    std::string variants_str = "noCL,noDis,noCIED";
    std::size_t n_seeds = 1;
    auto* cmd_ablate = app.add_subcommand("ablate", "run variant x seed sweeps");
    add_config_flags(cmd_ablate);
    cmd_ablate->add_option("--data", data_path, "canonical TSV dataset")->required();
    cmd_ablate->add_option("--out", out_path, "combined results CSV")->required();
    cmd_ablate->add_option("--variants", variants_str,
                           "comma list: noCL,noDis,noCIED,vCLUB,Linear,Nonlinear,Split,AVG,MLP,BI");
    cmd_ablate->add_option("--seeds", n_seeds, "seeds per variant (base = train.seed)");
    cmd_ablate->callback([&] {
        auto base = build_config();
        auto variants = split_csv_list(variants_str);
        variants.insert(variants.begin(), "IEDR");
        for (const auto& v : variants) variant_config(base, v); // validate names up front
        auto data = load_dataset(data_path, base);
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + out_path);
        f << "variant,seed,config_hash,ndcg@5,ndcg@10,recall@5,recall@10,auc\n";
        f << std::setprecision(17);
        for (const auto& v : variants) {
            for (std::size_t s = 0; s < n_seeds; ++s) {
                RunConfig cfg = variant_config(base, v);
                cfg.seed = base.seed + s;
                auto run = run_training(cfg, data);
                auto metrics = evaluate(*run.model, data.split.test, *data.catalog, data.history,
                                        cfg.to_train_options().eval);
                f << v << ',' << cfg.seed << ',' << cfg.hash() << ',' << metrics.ndcg5 << ','
                  << metrics.ndcg10 << ',' << metrics.recall5 << ',' << metrics.recall10 << ','
                  << metrics.auc << '\n';
                f.flush();
                std::cout << v << " seed=" << cfg.seed << " ndcg10=" << metrics.ndcg10 << "\n";
            }
        }
    });

    // --- synth ---
    SyntheticSpec spec;
    auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic dataset");
    cmd_synth->add_option("--out", out_path, "output directory")->required();
    cmd_synth->add_option("--users", spec.n_users);
    cmd_synth->add_option("--items", spec.n_items);
    cmd_synth->add_option("--contexts", spec.n_contexts);
    cmd_synth->add_option("--latent-dim", spec.latent_dim);
    cmd_synth->add_option("--intrinsic", spec.intrinsic_strength);
    cmd_synth->add_option("--extrinsic", spec.extrinsic_strength);
    cmd_synth->add_option("--noise", spec.noise_std);
    cmd_synth->add_option("--positives", spec.positives_per_context);
    cmd_synth->add_option("--holdout-contexts", spec.holdout_contexts);
    cmd_synth->add_option("--user-taste-mix", spec.user_taste_mix);
    cmd_synth->add_option("--seed", spec.seed);
    cmd_synth->callback([&] {
        auto ds = generate_synthetic(spec);
        fs::create_directories(out_path);
        write_tsv((fs::path(out_path) / "data.tsv").string(), ds.instances, ds.vocab);
        ds.vocab.save((fs::path(out_path) / "vocabulary.tsv").string());
        ds.truth.save((fs::path(out_path) / "ground_truth.json").string());
        std::cout << "instances=" << ds.instances.size() << " vocab=" << ds.vocab.size() << "\n";
    });

    // --- probe ---
    std::string probe_case;
    std::size_t probe_n = 10000;
    std::uint64_t probe_seed = 7;
    auto* cmd_probe = app.add_subcommand("probe", "mutual-information probes");
    cmd_probe->add_option("--case", probe_case, "calibration case: gaussians|identity4");
    cmd_probe->add_option("--checkpoint", checkpoint_path, "probe a trained model instead");
    cmd_probe->add_option("--data", data_path, "dataset for --checkpoint probing");
    cmd_probe->add_option("--out", out_path, "CSV output (default stdout)");
    cmd_probe->add_option("--n", probe_n, "sample count for calibration cases");
    cmd_probe->add_option("--seed", probe_seed);
    cmd_probe->callback([&] {
        std::ostringstream rows;
        rows << "probe,pair,estimate,unit\n";
        rows << std::setprecision(10);
        if (!probe_case.empty()) {
            RngStream rng(probe_seed, "probe.case");
            Tensor a({probe_n, 4}), b({probe_n, 4});
            if (probe_case == "gaussians") {
                for (auto& v : a.data) v = rng.gauss();
                for (auto& v : b.data) v = rng.gauss();
            } else if (probe_case == "identity4") {
                for (std::size_t i = 0; i < probe_n; ++i) {
                    const std::size_t s = rng.index(4);
                    a.at(i, s) = 1.0;
                    b.at(i, s) = 1.0;
                }
            } else {
                throw UsageError("unknown probe case: " + probe_case);
            }
            ProbeConfig pc;
            pc.seed = probe_seed;
            rows << "MINE," << probe_case << ',' << probe_mine(a, b, pc) << ",nats\n";
            rows << "CLUB," << probe_case << ',' << probe_club(a, b, pc) << ",nats\n";
        } else if (!checkpoint_path.empty()) {
            if (data_path.empty()) throw UsageError("probe --checkpoint needs --data");
            auto run = load_run(checkpoint_path);
            auto data = load_dataset(data_path, run.cfg, run.vocab);
            ProbeConfig pc;
            pc.seed = probe_seed;
            auto rep = disentanglement_report(*run.model, data.instances, pc, probe_seed);
            rows << "MINE,(o_in;c)," << rep.mine_intrinsic_ctx << ",nats\n";
            rows << "MINE,(o_ex;c)," << rep.mine_extrinsic_ctx << ",nats\n";
            rows << "CLUB,(o_in;c)," << rep.club_intrinsic_ctx << ",nats\n";
            rows << "CLUB,(o_ex;c)," << rep.club_extrinsic_ctx << ",nats\n";
            rows << "linear_probe_acc,(o_in;c)," << rep.probe_acc_intrinsic << ",accuracy\n";
            rows << "linear_probe_acc,(o_ex;c)," << rep.probe_acc_extrinsic << ",accuracy\n";
            rows << "cross_context_cosine,(o_in)," << rep.cross_context_cosine << ",cosine\n";
        } else {
            throw UsageError("probe needs --case or --checkpoint");
        }
        if (out_path.empty()) {
            std::cout << rows.str();
        } else {
            std::ofstream f(out_path, std::ios::trunc);
            if (!f) throw std::runtime_error("cannot write " + out_path);
            f << rows.str();
        }
    });

    // --- export ---
    std::string kind = "reps", side_str = "user", factor_str = "both", user_key;
    std::size_t n_contexts = 2;
    auto* cmd_export = app.add_subcommand("export", "export representations and diagnostics");
    cmd_export->add_option("--checkpoint", checkpoint_path)->required();
    cmd_export->add_option("--kind", kind, "reps|matching|blocks");
    cmd_export->add_option("--data", data_path, "dataset (reps and matching)");
    cmd_export->add_option("--out", out_path, "CSV path")->required();
    cmd_export->add_option("--side", side_str, "user|item");
    cmd_export->add_option("--factor", factor_str, "intrinsic|extrinsic|both");
    cmd_export->add_option("--user", user_key, "user key for matching (default: first)");
    cmd_export->add_option("--contexts", n_contexts, "distinct contexts for matching");
    cmd_export->callback([&] {
        auto run = load_run(checkpoint_path);
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + out_path);
        const Side side = side_str == "item" ? Side::item : Side::user;
        if (kind == "reps") {
            if (data_path.empty()) throw UsageError("export --kind reps needs --data");
            auto data = load_dataset(data_path, run.cfg, run.vocab);
            export_representations(*run.model, data.instances, factor_kind_from(factor_str), side,
                                   f);
        } else if (kind == "matching") {
            if (data_path.empty()) throw UsageError("export --kind matching needs --data");
            auto data = load_dataset(data_path, run.cfg, run.vocab);
            const Instance* user = nullptr;
            for (const auto& inst : data.instances)
                if (user_key.empty() || inst.user_key == user_key) {
                    user = &inst;
                    break;
                }
            if (!user) throw std::runtime_error("user not found: " + user_key);
            std::vector<std::vector<std::size_t>> contexts;
            for (const auto& inst : data.instances) {
                if (std::find(contexts.begin(), contexts.end(), inst.context_feats) ==
                    contexts.end())
                    contexts.push_back(inst.context_feats);
                if (contexts.size() == n_contexts) break;
            }
            std::vector<const std::vector<std::size_t>*> items;
            std::vector<std::string> keys;
            for (std::size_t i = 0; i < data.catalog->size(); ++i) {
                items.push_back(&data.catalog->feats(i));
                keys.push_back(data.catalog->key(i));
            }
            auto ms = matching_scores(*run.model, user->user_feats, contexts, items);
            write_matching_csv(f, ms, keys);
        } else if (kind == "blocks") {
            f << "side,u_to_in,u_to_ex,c_to_in,c_to_ex\n";
            f << std::setprecision(17);
            for (auto s : {Side::user, Side::item}) {
                auto m = run.model->factor_generator(s).weight_block_masses();
                f << (s == Side::user ? "user" : "item") << ',' << m[0] << ',' << m[1] << ','
                  << m[2] << ',' << m[3] << '\n';
            }
        } else {
            throw UsageError("unknown export kind: " + kind);
        }
    });

    // --- convert ---
    std::string format = "generic", in_path;
    std::string user_cols, item_cols, context_cols, label_col, order_col, user_key_col,
        item_key_col, bucket_col;
    auto* cmd_convert = app.add_subcommand("convert", "raw logs to canonical TSV");
    cmd_convert->add_option("--format", format, "frappe|generic");
    cmd_convert->add_option("--in", in_path, "raw input (header line required)")->required();
    cmd_convert->add_option("--out", out_path, "canonical TSV output")->required();
    cmd_convert->add_option("--user-cols", user_cols, "comma list of user feature columns");
    cmd_convert->add_option("--item-cols", item_cols, "comma list of item feature columns");
    cmd_convert->add_option("--context-cols", context_cols, "comma list of context columns");
    cmd_convert->add_option("--label-col", label_col);
    cmd_convert->add_option("--order-col", order_col, "ordering key column (default line order)");
    cmd_convert->add_option("--user-key-col", user_key_col);
    cmd_convert->add_option("--item-key-col", item_key_col);
    cmd_convert->add_option("--time-bucket-col", bucket_col,
                            "unix-seconds column bucketed to a month context");
    cmd_convert->callback([&] {
        if (format == "frappe")
            convert_frappe(in_path, out_path);
        else if (format == "generic")
            convert_generic(in_path, out_path, user_cols, item_cols, context_cols, label_col,
                            order_col, user_key_col, item_key_col, bucket_col);
        else
            throw UsageError("unknown format: " + format);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
