// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include "ldla/data.hpp"
#include "ldla/errors.hpp"
#include "ldla/evaluation.hpp"
#include "ldla/geometry.hpp"
#include "ldla/image_io.hpp"
#include "ldla/service.hpp"
#include "ldla/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace ldla::cli {

namespace {

using nlohmann::ordered_json;

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(path, "cannot open");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ZoneRegistry registry_from(const std::string& path) {
    return path.empty() ? default_zone_registry() : load_zone_registry(path);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

void print_config(std::ostream& out, const std::string& command, const ordered_json& cfg) {
    out << "resolved " << command << " config:\n" << cfg.dump(2) << '\n';
}

ordered_json params_json(const InferenceParams& p) {
    return {{"gamma_n", p.gamma_n}, {"gamma_inf", p.gamma_inf}, {"gamma_g", p.gamma_g}, {"seed", p.seed}};
}

// --- gen-corpus ------------------------------------------------------------------

struct GenArgs {
    SyntheticCorpusConfig cfg;
    std::string zones = "forehead,glabellar";
    std::string registry;
};

int cmd_gen_corpus(GenArgs& a, std::ostream& out) {
    a.cfg.zones = split_list(a.zones);
    const ZoneRegistry registry = registry_from(a.registry);
    print_config(out, "gen-corpus",
                 {{"output_dir", a.cfg.output_dir},
                  {"n_per_zone", a.cfg.n_per_zone},
                  {"crop_size", a.cfg.crop_size},
                  {"seed", a.cfg.seed},
                  {"zones", a.cfg.zones},
                  {"ethnicities", a.cfg.ethnicities},
                  {"max_amplitude", a.cfg.density.max_amplitude},
                  {"cycles", a.cfg.density.cycles},
                  {"texture_noise", a.cfg.texture_noise},
                  {"val_fraction", a.cfg.val_fraction},
                  {"test_fraction", a.cfg.test_fraction},
                  {"registry", a.registry}});
    const auto records = generate_synthetic_corpus(a.cfg, registry);
    out << "wrote " << records.size() << " crops and " << a.cfg.output_dir << "/manifest.jsonl\n";
    return kExitOk;
}

// --- train -----------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    std::optional<double> l_full, l_zone, l_cycle, l_score;
    std::optional<std::string> checkpoint_out, manifest, log_csv, resume;
    int log_every = 50;
};

TrainConfig resolve_train(const TrainArgs& a) {
    TrainConfig cfg = a.config.empty() ? TrainConfig{} : train_config_from_json(read_text(a.config));
    std::vector<std::string> ov = a.overrides;
    auto num = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    if (a.seed) ov.push_back("seed=" + std::to_string(*a.seed));
    if (a.steps) ov.push_back("steps=" + std::to_string(*a.steps));
    if (a.l_full) ov.push_back("weights.full=" + num(*a.l_full));
    if (a.l_zone) ov.push_back("weights.zone=" + num(*a.l_zone));
    if (a.l_cycle) ov.push_back("weights.cycle=" + num(*a.l_cycle));
    if (a.l_score) ov.push_back("weights.score=" + num(*a.l_score));
    if (a.checkpoint_out) ov.push_back("checkpoint.out=" + *a.checkpoint_out);
    if (a.manifest) ov.push_back("data.manifest=" + *a.manifest);
    if (a.log_csv) ov.push_back("log_csv=" + *a.log_csv);
    if (a.resume) ov.push_back("checkpoint.resume_from=" + *a.resume);
    return apply_overrides(cfg, ov);
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const TrainConfig cfg = resolve_train(a);
    out << "resolved train config:\n" << train_config_to_json(cfg) << '\n';
    const auto result = train(cfg, [&](const LossRecord& r) {
        if (a.log_every > 0 && (r.step % static_cast<std::uint64_t>(a.log_every) == 0 || r.step == 1)) {
            out << "step " << r.step;
            for (std::size_t k = 0; k < 4; ++k) {
                if (!std::isnan(r.components[k])) {
                    out << ' ' << kLossTermNames[k] << '=' << r.components[k];
                }
            }
            out << " total=" << r.total;
            if (!std::isnan(r.score_anchor)) {
                out << " score_anchor=" << r.score_anchor;
            }
            out << '\n' << std::flush;
        }
    });
    out << "finished at step " << result.state.step;
    if (!cfg.checkpoint_out.empty()) {
        out << ", checkpoint " << cfg.checkpoint_out;
    }
    out << '\n';
    return kExitOk;
}

// --- age -------------------------------------------------------------------------

struct AgeArgs {
    std::string checkpoint, face, out_path, targets = "{}", ethnicity = "Caucasian", registry, landmarks,
        landmark_command, refiner = "identity";
    InferenceParams params;
    bool no_refiner = false;
    double refiner_strength = kDefaultRefinerStrength;
};

int cmd_age(const AgeArgs& a, std::ostream& out) {
    const ZoneRegistry registry = registry_from(a.registry);
    const auto targets = parse_targets(a.targets, registry);
    ordered_json tj = ordered_json::object();
    for (const auto& t : targets) {
        tj[t.zone_id] = t.target_normalized;
    }
    print_config(out, "age",
                 {{"checkpoint", a.checkpoint},
                  {"face", a.face},
                  {"out", a.out_path},
                  {"targets", tj},
                  {"ethnicity", a.ethnicity},
                  {"params", params_json(a.params)},
                  {"refiner", a.no_refiner ? "none" : a.refiner},
                  {"refiner_strength", a.refiner_strength},
                  {"landmarks", a.landmarks},
                  {"landmark_command", a.landmark_command},
                  {"registry", a.registry}});
    a.params.validate();

    const Tensor face = read_png(a.face);
    InferenceModels models = load_inference_models(a.checkpoint);
    if (a.refiner == "img2img") {
        models.refiner = std::make_shared<Img2ImgRefiner>(models.codec, models.predictor, models.text,
                                                          models.schedule, a.params.gamma_inf, a.params.gamma_g,
                                                          a.params.seed);
    } else if (a.refiner != "identity") {
        throw ValidationError("--refiner must be identity or img2img");
    }
    std::optional<Landmarks> lm;
    if (!a.landmarks.empty()) {
        lm = FixtureLandmarks(a.landmarks).detect(face);
    } else if (!a.landmark_command.empty()) {
        lm = ExternalLandmarks(a.landmark_command).detect(face);
    }
    Tensor aged = age_face(face, targets, a.ethnicity, a.params, models, registry, lm);
    if (!a.no_refiner) {
        aged = refine_face(aged, *models.refiner, a.refiner_strength);
    }
    write_png(a.out_path, aged);
    out << "wrote " << a.out_path << '\n';
    return kExitOk;
}

// --- eval ------------------------------------------------------------------------

struct EvalArgs {
    std::string real, generated, checkpoint, scorer = "oracle", out_path, registry, gen_dir, split = "test";
    bool split_reference = false;
    int feature_grid = 4;
    std::size_t max_records = 0;
    InferenceParams params;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    print_config(out, "eval",
                 {{"real", a.real},
                  {"generated", a.generated},
                  {"checkpoint", a.checkpoint},
                  {"scorer", a.scorer},
                  {"split_reference", a.split_reference},
                  {"feature_grid", a.feature_grid},
                  {"translate_split", a.split},
                  {"gen_dir", a.gen_dir},
                  {"max_records", a.max_records},
                  {"params", params_json(a.params)},
                  {"registry", a.registry},
                  {"out", a.out_path}});
    const ZoneRegistry registry = registry_from(a.registry);
    std::string generated = a.generated;
    if (generated.empty()) {
        if (a.checkpoint.empty() || a.gen_dir.empty()) {
            throw ValidationError("eval needs --generated, or --checkpoint and --gen-dir to translate --real");
        }
        const InferenceModels models = load_inference_models(a.checkpoint);
        generated = translate_manifest(a.real, split_from_string(a.split), models, registry, a.params, a.gen_dir,
                                       a.max_records);
        out << "translated crops written to " << generated << '\n';
    }
    CropScorer scorer;
    if (a.scorer == "oracle") {
        scorer = oracle_scorer();
    } else if (a.scorer == "scorenet") {
        if (a.checkpoint.empty()) {
            throw ValidationError("--scorer scorenet needs --checkpoint");
        }
        scorer = scorenet_scorer(a.checkpoint);
    } else {
        throw ValidationError("--scorer must be oracle or scorenet");
    }
    const EvalReport rep =
        evaluate_manifests(a.real, generated, registry, scorer, {a.feature_grid, a.split_reference, a.params.seed});
    const std::string json = rep.to_json();
    if (a.out_path.empty()) {
        out << json << '\n';
    } else {
        std::ofstream f(a.out_path);
        f << json << '\n';
        if (!f) {
            throw IoError(a.out_path, "cannot write report");
        }
        out << "wrote " << a.out_path << '\n';
    }
    return kExitOk;
}

// --- serve -----------------------------------------------------------------------

struct ServeArgs {
    std::string checkpoint, registry;
    ServiceConfig cfg;
    std::optional<int> port;
};

std::atomic<AgingService*> g_service{nullptr};

extern "C" void on_signal(int) {
    if (AgingService* s = g_service.load()) {
        s->stop();
    }
}

int cmd_serve(ServeArgs& a, std::ostream& out) {
    a.cfg.port = a.port ? *a.port : port_from_env();
    print_config(out, "serve",
                 {{"checkpoint", a.checkpoint},
                  {"host", a.cfg.host},
                  {"port", a.cfg.port},
                  {"workers", a.cfg.workers},
                  {"max_payload", a.cfg.max_payload},
                  {"cors_origin", a.cfg.cors_origin},
                  {"refiner", a.cfg.refiner},
                  {"refiner_strength", a.cfg.refiner_strength},
                  {"registry", a.registry}});
    AgingService service(a.cfg, registry_from(a.registry));
    service.load_checkpoint(a.checkpoint);
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    out << "serving on http://" << a.cfg.host << ':' << a.cfg.port << '\n' << std::flush;
    service.run();
    g_service = nullptr;
    return kExitOk;
}

void add_params(CLI::App* cmd, InferenceParams& p) {
    cmd->add_option("--gamma-n", p.gamma_n, "noise strength in (0,1]")->capture_default_str();
    cmd->add_option("--gamma-inf", p.gamma_inf, "denoising grid size")->capture_default_str();
    cmd->add_option("--gamma-g", p.gamma_g, "guidance scale")->capture_default_str();
    cmd->add_option("--seed", p.seed, "noise seed")->capture_default_str();
}

}  // namespace

std::vector<ZoneTarget> parse_targets(const std::string& spec, const ZoneRegistry& registry) {
    constexpr std::string_view kUniform = "uniform:";
    std::vector<ZoneTarget> out;
    if (spec.starts_with(kUniform)) {
        const std::string v = spec.substr(kUniform.size());
        std::size_t used = 0;
        double pct = 0.0;
        try {
            pct = std::stod(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != v.size()) {
            throw ValidationError("--targets uniform:<percent> needs a number, got \"" + v + "\"");
        }
        return uniform_targets(registry, normalized_from_percent(pct));
    }
    ordered_json j;
    try {
        j = ordered_json::parse(spec);
    } catch (const ordered_json::parse_error& e) {
        throw ValidationError(std::string("--targets is neither uniform:<percent> nor JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ValidationError("--targets JSON must map zone ids to percents");
    }
    for (const auto& [zone, pct] : j.items()) {
        if (!pct.is_number()) {
            throw ValidationError("--targets: percent for " + zone + " must be a number");
        }
        out.push_back({zone, normalized_from_percent(pct.get<double>())});
    }
    validate_targets(out, registry);
    return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"ldla: locally controlled face aging with latent diffusion"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Expand all help");

    GenArgs gen;
    auto* g = app.add_subcommand("gen-corpus", "Generate the synthetic wrinkle-proxy corpus");
    g->add_option("--out", gen.cfg.output_dir, "output directory")->required();
    g->add_option("--n-per-zone", gen.cfg.n_per_zone)->capture_default_str();
    g->add_option("--crop-size", gen.cfg.crop_size)->capture_default_str();
    g->add_option("--seed", gen.cfg.seed)->capture_default_str();
    g->add_option("--zones", gen.zones, "comma-separated zone ids")->capture_default_str();
    g->add_option("--max-amplitude", gen.cfg.density.max_amplitude)->capture_default_str();
    g->add_option("--cycles", gen.cfg.density.cycles)->capture_default_str();
    g->add_option("--texture-noise", gen.cfg.texture_noise)->capture_default_str();
    g->add_option("--registry", gen.registry, "zone registry JSON (default: built-in)");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train the denoiser and ScoreNet");
    t->add_option("--config", tr.config, "training config JSON");
    t->add_option("--set", tr.overrides, "dotted.key=value override (repeatable)");
    t->add_option("--seed", tr.seed);
    t->add_option("--steps", tr.steps);
    t->add_option("--lambda-full", tr.l_full);
    t->add_option("--lambda-zone", tr.l_zone);
    t->add_option("--lambda-cycle", tr.l_cycle);
    t->add_option("--lambda-score", tr.l_score);
    t->add_option("--checkpoint-out", tr.checkpoint_out);
    t->add_option("--manifest", tr.manifest);
    t->add_option("--log-csv", tr.log_csv);
    t->add_option("--resume", tr.resume, "checkpoint to resume from");
    t->add_option("--log-every", tr.log_every, "print every N steps (0: quiet)")->capture_default_str();

    AgeArgs age;
    auto* a = app.add_subcommand("age", "Age zones of an aligned face");
    a->add_option("--checkpoint", age.checkpoint)->required();
    a->add_option("--face", age.face, "aligned face PNG")->required();
    a->add_option("--out", age.out_path, "output PNG")->required();
    a->add_option("--targets", age.targets, "JSON {zone: percent} or uniform:<percent>")->capture_default_str();
    a->add_option("--ethnicity", age.ethnicity)->capture_default_str();
    add_params(a, age.params);
    a->add_flag("--no-refiner", age.no_refiner, "skip the refiner pass");
    a->add_option("--refiner", age.refiner, "identity or img2img")->capture_default_str();
    a->add_option("--refiner-strength", age.refiner_strength)->capture_default_str();
    a->add_option("--landmarks", age.landmarks, "landmark fixture JSON");
    a->add_option("--landmark-command", age.landmark_command, "program printing landmark JSON for a PNG path");
    a->add_option("--registry", age.registry);

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "FID and MAE of generated crops");
    e->add_option("--real", ev.real, "manifest of real crops")->required();
    e->add_option("--generated", ev.generated, "manifest of generated crops");
    e->add_flag("--split-reference", ev.split_reference, "also report split-half FID of the real set");
    e->add_option("--checkpoint", ev.checkpoint);
    e->add_option("--scorer", ev.scorer, "oracle or scorenet")->capture_default_str();
    e->add_option("--gen-dir", ev.gen_dir, "where to write translated crops when --generated is absent");
    e->add_option("--split", ev.split, "split of --real to translate")->capture_default_str();
    e->add_option("--max-records", ev.max_records, "translate at most N records (0: all)");
    e->add_option("--feature-grid", ev.feature_grid)->capture_default_str();
    e->add_option("--out", ev.out_path, "report JSON path (default: stdout)");
    e->add_option("--registry", ev.registry);
    add_params(e, ev.params);

    ServeArgs sv;
    auto* s = app.add_subcommand("serve", "Run the HTTP service");
    s->add_option("--checkpoint", sv.checkpoint)->required();
    s->add_option("--host", sv.cfg.host)->capture_default_str();
    s->add_option("--port", sv.port, "port (default: LDLA_PORT or 8742)");
    s->add_option("--workers", sv.cfg.workers)->capture_default_str();
    s->add_option("--cors-origin", sv.cfg.cors_origin)->capture_default_str();
    s->add_option("--refiner", sv.cfg.refiner, "identity or img2img")->capture_default_str();
    s->add_option("--registry", sv.registry);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& pe) {
        err << "error: " << pe.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (g->parsed()) return cmd_gen_corpus(gen, out);
        if (t->parsed()) return cmd_train(tr, out);
        if (a->parsed()) return cmd_age(age, out);
        if (e->parsed()) return cmd_eval(ev, out);
        if (s->parsed()) return cmd_serve(sv, out);
    } catch (const ConfigError& ex) {
        err << "configuration error: " << ex.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitFailure;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace ldla::cli
