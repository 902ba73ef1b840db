// Command-line front end: corpus preparation, training, evaluation, inference and serving.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "valresp/corpus.hpp"
#include "valresp/error.hpp"
#include "valresp/metrics.hpp"
#include "valresp/nn/checkpoint.hpp"
#include "valresp/nn/kernels.hpp"
#include "valresp/nn/train.hpp"
#include "valresp/pipeline.hpp"
#include "valresp/responder.hpp"
#include "valresp/saliency.hpp"
#include "valresp/service.hpp"
#include "valresp/unicode.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace valresp;

#ifndef VALRESP_CONFIG_DIR
#define VALRESP_CONFIG_DIR "configs"
#endif

namespace {

struct Globals {
    std::string config = std::string(VALRESP_CONFIG_DIR) + "/pipeline_synthetic.json";
    std::optional<std::uint64_t> seed;
    std::string out = "out";
};

pipeline::PipelineConfig load_config(const Globals& g) {
    auto cfg = pipeline::PipelineConfig::load(g.config);
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

void write_file(const fs::path& path, const std::string& body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot write " + path.string());
    out << body;
}

std::vector<int> labels_of(const std::vector<nn::LabeledIds>& v) {
    std::vector<int> out;
    for (const auto& x : v) out.push_back(x.label);
    return out;
}

std::vector<int> predict_labels(const nn::Model& model, const std::vector<nn::LabeledIds>& data) {
    std::vector<std::vector<int>> inputs;
    for (const auto& x : data) inputs.push_back(x.ids);
    std::vector<int> out;
    for (const auto& p : nn::predict_batch(model, inputs)) out.push_back(p.label);
    return out;
}

void emit_report(const json& report, const std::string& csv_path, const std::string& run_name) {
    std::cout << report.dump(2) << "\n";
    if (csv_path.empty()) return;
    const bool fresh = !fs::exists(csv_path);
    std::ofstream csv(csv_path, std::ios::app);
    if (!csv) throw RuntimeError("cannot write " + csv_path);
    std::vector<std::pair<std::string, double>> cols;
    for (auto it = report.begin(); it != report.end(); ++it) {
        if (it->is_number()) cols.emplace_back(it.key(), it->get<double>());
        if (it->is_object()) {
            for (auto jt = it->begin(); jt != it->end(); ++jt) {
                if (jt->is_number()) cols.emplace_back(it.key() + "." + jt.key(), jt->get<double>());
            }
        }
    }
    if (fresh) {
        csv << "run";
        for (const auto& [k, v] : cols) csv << "," << k;
        csv << "\n";
    }
    csv << run_name;
    for (const auto& [k, v] : cols) csv << "," << v;
    csv << "\n";
}

pipeline::Task task_of(const std::string& name) {
    return name == "timing" ? pipeline::Task::Timing : pipeline::Task::Emotion;
}

int run(int argc, char** argv) {
    CLI::App app{"Validating-response pipeline: timing detection, emotion and cause extraction, template responses"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "pipeline config JSON")->capture_default_str();
    app.add_option("--seed", g.seed, "override the config seed");
    app.add_option("--out", g.out, "output directory")->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dialogue corpus");
    std::optional<std::size_t> synth_n;
    synth->add_option("-n,--num-dialogues", synth_n, "number of dialogues");

    // annotate
    auto* annotate = app.add_subcommand("annotate", "label validation timing and extract emotion examples");
    std::string annotate_in;
    annotate->add_option("--input", annotate_in, "dialogues JSONL")->required();

    // split
    auto* split = app.add_subcommand("split", "split examples into train/dev/test by dialogue");
    std::string split_in;
    std::vector<double> ratios{0.8, 0.1, 0.1};
    split->add_option("--input", split_in, "examples JSONL")->required();
    split->add_option("--ratios", ratios, "three ratios summing to 1")->expected(3)->capture_default_str();

    // train
    auto* train = app.add_subcommand("train", "train one model");
    std::string train_task, train_file, dev_file, vocab_file, init_ckpt;
    train->add_option("--task", train_task, "mlm|timing|emotion")
        ->required()
        ->check(CLI::IsMember({"mlm", "timing", "emotion"}));
    train->add_option("--train", train_file, "training examples JSONL")->required();
    train->add_option("--dev", dev_file, "dev examples JSONL (timing/emotion)");
    train->add_option("--vocab", vocab_file, "vocabulary JSON (built from --train when absent)");
    train->add_option("--init", init_ckpt, "checkpoint whose encoder initializes the model");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_task, eval_ckpt, eval_data, eval_dialogues, eval_csv;
    eval->add_option("--task", eval_task, "timing|emotion|cause|generation")
        ->required()
        ->check(CLI::IsMember({"timing", "emotion", "cause", "generation"}));
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval->add_option("--data", eval_data, "examples JSONL")->required();
    eval->add_option("--dialogues", eval_dialogues, "dialogues JSONL holding reference replies (generation)");
    eval->add_option("--csv", eval_csv, "append a CSV row");

    // extract-causes
    auto* extract = app.add_subcommand("extract-causes", "top-k cause phrases by gradient x input");
    std::string extract_ckpt, extract_data;
    extract->add_option("--checkpoint", extract_ckpt, "emotion checkpoint")->required();
    extract->add_option("--data", extract_data, "examples JSONL")->required();

    // respond
    auto* respond = app.add_subcommand("respond", "run one turn through the full pipeline");
    std::string respond_timing, respond_emotion, respond_text;
    std::vector<std::string> respond_history;
    respond->add_option("--timing", respond_timing, "timing checkpoint");
    respond->add_option("--emotion", respond_emotion, "emotion checkpoint");
    respond->add_option("--history", respond_history, "earlier turns, oldest first (user, system, ...)");
    respond->add_option("text", respond_text, "user utterance")->required();

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "run the full experiment");

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP session service");
    std::string serve_timing, serve_emotion, serve_host, serve_persist;
    int serve_port = 0;
    std::vector<std::string> serve_cors;
    serve->add_option("--timing", serve_timing, "timing checkpoint");
    serve->add_option("--emotion", serve_emotion, "emotion checkpoint");
    serve->add_option("--host", serve_host, "bind address");
    serve->add_option("--port", serve_port, "port");
    serve->add_option("--cors", serve_cors, "allowed CORS origins");
    serve->add_option("--persist", serve_persist, "append turns to this JSONL file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ErrorKind::Config);
    }

    const fs::path out = g.out;

    if (*synth) {
        auto cfg = load_config(g);
        if (!cfg.synthesis) throw ConfigError("config has no synthesis spec");
        if (synth_n) cfg.synthesis->num_dialogues = *synth_n;
        const auto dialogues = corpus::generate_synthetic(*cfg.synthesis, cfg.seed_for("synthesis"));
        fs::create_directories(out);
        corpus::save_dialogues(out / "dialogues.jsonl", dialogues);
        std::cout << json{{"dialogues", dialogues.size()}, {"path", (out / "dialogues.jsonl").string()}}.dump() << "\n";
        return 0;
    }

    if (*annotate) {
        const auto cfg = load_config(g);
        auto dialogues = corpus::load_dialogues(annotate_in);
        std::vector<corpus::LabeledExample> timing, emotion;
        std::size_t positives = 0;
        for (auto& d : dialogues) {
            if (d.source == corpus::Source::SpokenCorpus) d = corpus::preprocess_spoken(d, cfg.spoken_filter);
            if (d.turns.size() >= 2) {
                for (auto& e : corpus::annotate_validation(d, cfg.rules)) {
                    if (e.timing_label == corpus::TimingLabel::Validating) ++positives;
                    timing.push_back(std::move(e));
                }
            }
            if (auto e = corpus::emotion_example(d)) emotion.push_back(std::move(*e));
        }
        fs::create_directories(out);
        corpus::save_examples(out / "timing_examples.jsonl", timing);
        corpus::save_examples(out / "emotion_examples.jsonl", emotion);
        std::cout << json{{"timing_examples", timing.size()},
                          {"validating", positives},
                          {"emotion_examples", emotion.size()}}
                         .dump()
                  << "\n";
        return 0;
    }

    if (*split) {
        const auto cfg = load_config(g);
        const auto examples = corpus::load_examples(split_in);
        const auto s = corpus::split_dataset(examples, {{ratios[0], ratios[1], ratios[2]}, cfg.seed_for("split")});
        fs::create_directories(out);
        corpus::save_examples(out / "train.jsonl", s.train);
        corpus::save_examples(out / "dev.jsonl", s.dev);
        corpus::save_examples(out / "test.jsonl", s.test);
        std::cout << json{{"train", s.train.size()}, {"dev", s.dev.size()}, {"test", s.test.size()}}.dump() << "\n";
        return 0;
    }

    if (*train) {
        const auto cfg = load_config(g);
        const auto train_examples = corpus::load_examples(train_file);
        std::optional<text::Vocabulary> vocab;
        std::optional<nn::Checkpoint> init;
        if (!init_ckpt.empty()) {
            init = nn::load_checkpoint(init_ckpt);
            vocab = init->vocab;
        } else if (!vocab_file.empty()) {
            std::ifstream in(vocab_file);
            if (!in) throw ConfigError("cannot open " + vocab_file);
            vocab = text::Vocabulary::from_json(json::parse(in));
        } else {
            std::vector<text::TokenSequence> seqs;
            for (const auto& e : train_examples) seqs.push_back(text::tokenize(unicode::nfkc(e.context), cfg.tokenizer));
            vocab = text::Vocabulary::build(seqs, cfg.min_freq, cfg.tokenizer);
        }
        fs::create_directories(out / "checkpoints");
        write_file(out / "vocab.json", vocab->to_json().dump(2) + "\n");
        nn::ModelConfig enc = init ? init->model.config() : cfg.encoder;
        enc.vocab_size = vocab->size();

        if (train_task == "mlm") {
            auto tc = cfg.mlm_train;
            tc.seed = cfg.seed_for("mlm-train");
            std::vector<std::vector<int>> seqs;
            for (const auto& e : train_examples) seqs.push_back(pipeline::encode_text(e.context, *vocab, enc.max_len).ids);
            enc.seed = cfg.seed_for("mlm-init");
            const auto res = nn::pretrain_mlm(nn::make_mlm_model(enc), seqs, tc, cfg.mask_rate);
            const json summary = {{"initial_loss", res.initial_loss},
                                  {"final_loss", res.final_loss},
                                  {"epoch_losses", res.epoch_losses},
                                  {"steps", res.steps}};
            nn::save_checkpoint({"mlm", res.model, *vocab, summary}, out / "checkpoints" / "mlm.json");
            std::cout << summary.dump(2) << "\n";
            return 0;
        }
        if (dev_file.empty()) throw ConfigError("--dev is required for timing/emotion training");
        const auto dev_examples = corpus::load_examples(dev_file);
        const auto task = task_of(train_task);
        const auto tr = pipeline::encode_examples(train_examples, task, *vocab, enc.max_len);
        const auto dv = pipeline::encode_examples(dev_examples, task, *vocab, enc.max_len);
        const std::size_t classes = task == pipeline::Task::Timing ? 2 : corpus::kNumEmotions;
        auto tc = task == pipeline::Task::Timing ? cfg.timing_train : cfg.emotion_train;
        tc.seed = cfg.seed_for(train_task + "-train");
        if (task == pipeline::Task::Timing) tc.target_class = 1;
        nn::Model model;
        if (init) {
            model = nn::with_new_head(init->model, classes, cfg.seed_for(train_task + "-head"));
        } else {
            enc.num_classes = classes;
            enc.seed = cfg.seed_for(train_task + "-init");
            model = nn::Model::initialize(enc);
        }
        const auto res = nn::train_classifier(std::move(model), tr, dv, tc);
        nn::save_checkpoint({train_task, res.model, *vocab, res.log.summary()},
                            out / "checkpoints" / (train_task + ".json"));
        write_file(out / ("train_log_" + train_task + ".jsonl"), res.log.to_jsonl());
        std::cout << res.log.summary().dump(2) << "\n";
        return 0;
    }

    if (*eval) {
        const auto cfg = load_config(g);
        const auto ck = nn::load_checkpoint(eval_ckpt);
        const auto examples = corpus::load_examples(eval_data);
        const std::size_t max_len = ck.model.config().max_len;
        json report;
        if (eval_task == "timing" || eval_task == "emotion") {
            const auto task = task_of(eval_task);
            const auto data = pipeline::encode_examples(examples, task, ck.vocab, max_len);
            const auto labels = labels_of(data);
            const auto preds = predict_labels(ck.model, data);
            std::optional<int> target;
            if (task == pipeline::Task::Timing) target = 1;
            report = metrics::classification_report(labels, preds, target).to_json();
        } else {
            responder::ResponderConfig rcfg;
            rcfg.threshold = cfg.threshold;
            rcfg.noun = cfg.noun;
            std::size_t hits = 0;
            double bleu_sum = 0.0, f1_sum = 0.0;
            std::size_t scored = 0;
            std::unordered_map<std::string, corpus::Dialogue> dialogues;
            if (eval_task == "generation") {
                if (eval_dialogues.empty()) throw ConfigError("--dialogues is required for generation evaluation");
                for (auto& d : corpus::load_dialogues(eval_dialogues)) dialogues.emplace(d.id, std::move(d));
            }
            const auto toks = [&](const std::string& s) {
                return text::tokenize(text::normalize_model_text(s), ck.vocab.mode()).tokens;
            };
            for (const auto& ex : examples) {
                const auto an = pipeline::analyze_emotion(ck.model, ck.vocab, ex.context, cfg.top_k, cfg.aggregation);
                if (eval_task == "cause") {
                    if (!ex.cause_phrase) continue;
                    if (saliency::cause_match(an.causes, *ex.cause_phrase)) ++hits;
                    if (!an.causes.empty()) {
                        const auto c = toks(an.causes.front().phrase);
                        const auto r = toks(*ex.cause_phrase);
                        bleu_sum += metrics::bleu(c, r);
                        f1_sum += metrics::embed_score(ck.model, ck.vocab, c, r).f1;
                    }
                    ++scored;
                } else {
                    const auto it = dialogues.find(ex.dialogue_id);
                    if (it == dialogues.end() || ex.turn + 1 >= it->second.turns.size()) continue;
                    const auto& reply = it->second.turns[ex.turn + 1].text;
                    if (!corpus::is_validating_response(reply, cfg.rules)) continue;
                    const auto gen = responder::generate_response(an.prediction, an.causes, cfg.lexicon, rcfg, ex.context);
                    const auto c = toks(gen.text);
                    const auto r = toks(reply);
                    bleu_sum += metrics::bleu(c, r);
                    f1_sum += metrics::embed_score(ck.model, ck.vocab, c, r).f1;
                    ++scored;
                }
            }
            if (scored == 0) throw DataError("no examples to score");
            const double n = static_cast<double>(scored);
            report = {{"examples", scored}, {"bleu", bleu_sum / n}, {"embed_score_f1", f1_sum / n}};
            if (eval_task == "cause") report["accuracy"] = static_cast<double>(hits) / n;
        }
        emit_report(report, eval_csv, eval_task + ":" + fs::path(eval_ckpt).stem().string());
        return 0;
    }

    if (*extract) {
        const auto cfg = load_config(g);
        const auto ck = nn::load_checkpoint(extract_ckpt);
        for (const auto& ex : corpus::load_examples(extract_data)) {
            const auto an = pipeline::analyze_emotion(ck.model, ck.vocab, ex.context, cfg.top_k, cfg.aggregation);
            json causes = json::array();
            for (const auto& c : an.causes) {
                causes.push_back({{"phrase", c.phrase}, {"score", c.score}, {"span", {c.span.begin, c.span.end}}});
            }
            json rec = {{"dialogue_id", ex.dialogue_id},
                        {"predicted_emotion", corpus::to_string(corpus::emotion_from_index(an.prediction.label))},
                        {"confidence", an.prediction.confidence},
                        {"causes", causes},
                        {"matched", nullptr}};
            if (ex.cause_phrase && !saliency::normalize_phrase(*ex.cause_phrase).empty()) {
                rec["matched"] = saliency::cause_match(an.causes, *ex.cause_phrase);
            }
            std::cout << rec.dump() << "\n";
        }
        return 0;
    }

    if (*respond) {
        const auto cfg = load_config(g);
        const fs::path tp = respond_timing.empty() ? cfg.output_dir / "checkpoints" / "timing.json" : fs::path(respond_timing);
        const fs::path ep = respond_emotion.empty() ? cfg.output_dir / "checkpoints" / "emotion.json" : fs::path(respond_emotion);
        const auto models = pipeline::Models::load(tp, ep, cfg);
        std::vector<corpus::Utterance> history;
        for (const auto& t : respond_history) {
            history.push_back({history.size() % 2 == 0 ? corpus::Speaker::A : corpus::Speaker::B, t, history.size()});
        }
        std::cout << pipeline::decide_turn(models, history, respond_text).to_json().dump(2) << "\n";
        return 0;
    }

    if (*pipe) {
        auto cfg = load_config(g);
        if (app.get_option("--out")->count() > 0) cfg.output_dir = out;
        const auto report = pipeline::run_experiment(cfg);
        std::cout << json{{"output_dir", cfg.output_dir.string()},
                          {"seconds", report.seconds},
                          {"metrics", report.metrics_json()}}
                         .dump(2)
                  << "\n";
        return 0;
    }

    if (*serve) {
        const auto cfg = load_config(g);
        service::ServiceConfig sc;
        sc.timing_checkpoint = cfg.output_dir / "checkpoints" / "timing.json";
        sc.emotion_checkpoint = cfg.output_dir / "checkpoints" / "emotion.json";
        if (!serve_timing.empty()) sc.timing_checkpoint = serve_timing;
        if (!serve_emotion.empty()) sc.emotion_checkpoint = serve_emotion;
        if (!serve_host.empty()) sc.host = serve_host;
        if (serve_port > 0) sc.port = serve_port;
        if (!serve_persist.empty()) sc.persistence_path = serve_persist;
        sc.cors_origins = serve_cors;
        sc.apply_env([](const char* name) { return std::getenv(name); });
        service::SessionManager manager(sc);
        manager.set_models(std::make_shared<const pipeline::Models>(
            pipeline::Models::load(sc.timing_checkpoint, sc.emotion_checkpoint, cfg)));
        std::cerr << "listening on " << sc.host << ":" << sc.port << "\n";
        service::serve(manager);
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::Data);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::Runtime);
    }
}
