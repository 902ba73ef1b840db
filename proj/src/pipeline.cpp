#include "valresp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "valresp/error.hpp"
#include "valresp/rng.hpp"
#include "valresp/unicode.hpp"

namespace valresp::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot write " + path.string());
    out << body;
    if (!out) throw RuntimeError("write failed for " + path.string());
}

fs::path resolve(const fs::path& base, const std::string& ref) {
    fs::path p(ref);
    return p.is_relative() && !base.empty() ? base / p : p;
}

// A config entry may be inline JSON or a path to a JSON file.
json inline_or_file(const json& node, const fs::path& base) {
    if (node.is_string()) return read_json(resolve(base, node.get<std::string>()));
    return node;
}

std::array<double, 3> ratios_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("split ratios need exactly three entries");
    return {v[0], v[1], v[2]};
}

saliency::Aggregation aggregation_from_string(std::string_view name) {
    if (name == "signed") return saliency::Aggregation::Signed;
    if (name == "absolute") return saliency::Aggregation::Absolute;
    throw ConfigError("unknown saliency aggregation '" + std::string(name) + "' (expected signed|absolute)");
}

std::string_view to_string(saliency::Aggregation a) {
    return a == saliency::Aggregation::Signed ? "signed" : "absolute";
}

template <typename F>
auto stage(std::string_view name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const PreconditionError& e) {
        throw PreconditionError("stage '" + std::string(name) + "': " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError("stage '" + std::string(name) + "': " + e.what());
    } catch (const DataError& e) {
        throw DataError("stage '" + std::string(name) + "': " + e.what());
    } catch (const Error& e) {
        throw RuntimeError("stage '" + std::string(name) + "': " + e.what());
    } catch (const json::exception& e) {
        throw DataError("stage '" + std::string(name) + "': " + e.what());
    } catch (const fs::filesystem_error& e) {
        throw RuntimeError("stage '" + std::string(name) + "': " + e.what());
    }
}

json causes_to_json(std::span<const saliency::CauseCandidate> causes) {
    json out = json::array();
    for (const auto& c : causes) {
        out.push_back({{"phrase", c.phrase},
                       {"score", c.score},
                       {"span", {c.span.begin, c.span.end}},
                       {"token_indices", c.token_indices}});
    }
    return out;
}

json embed_to_json(const metrics::EmbedScore& s) {
    return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

std::vector<std::string> surface_tokens(std::string_view text, text::TokenizerMode mode) {
    return text::tokenize(text::normalize_model_text(text), mode).tokens;
}

}  // namespace

// ---- config -----------------------------------------------------------------------------

std::string_view to_string(BaselineMode m) { return m == BaselineMode::Empirical ? "empirical" : "uniform"; }

BaselineMode baseline_mode_from_string(std::string_view name) {
    if (name == "empirical") return BaselineMode::Empirical;
    if (name == "uniform") return BaselineMode::Uniform;
    throw ConfigError("unknown baseline mode '" + std::string(name) + "' (expected empirical|uniform)");
}

std::uint64_t PipelineConfig::seed_for(std::string_view purpose) const { return derive_seed(seed, fnv1a64(purpose)); }

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base) {
    try {
        PipelineConfig c;
        c.seed = j.value("seed", c.seed);
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();

        if (j.contains("corpus")) {
            const auto& cj = j.at("corpus");
            if (cj.contains("paths")) {
                for (const auto& p : cj.at("paths")) c.corpus_paths.push_back(resolve(base, p.get<std::string>()));
            }
            if (cj.contains("synthesis")) {
                auto sj = inline_or_file(cj.at("synthesis"), base);
                if (cj.contains("num_dialogues")) sj["num_dialogues"] = cj.at("num_dialogues");
                if (cj.contains("validating_rate")) sj["validating_rate"] = cj.at("validating_rate");
                c.synthesis = corpus::SynthesisConfig::from_json(sj);
            }
            if (cj.contains("spoken_filter")) {
                c.spoken_filter = corpus::SpokenFilterConfig::from_json(inline_or_file(cj.at("spoken_filter"), base));
            }
        }
        if (j.contains("tokenizer")) c.tokenizer = text::tokenizer_mode_from_string(j.at("tokenizer").get<std::string>());
        c.min_freq = j.value("min_freq", c.min_freq);

        if (!j.contains("rules")) throw ConfigError("pipeline config needs 'rules'");
        c.rules = corpus::PhraseRuleSet::from_json(inline_or_file(j.at("rules"), base));
        if (j.contains("lexicon")) c.lexicon = responder::EmotionLexicon::from_json(inline_or_file(j.at("lexicon"), base));
        if (j.contains("noun")) c.noun = responder::NounHeuristic::from_json(inline_or_file(j.at("noun"), base));

        if (j.contains("splits")) {
            const auto& sj = j.at("splits");
            if (sj.contains("timing")) c.timing_split = ratios_from_json(sj.at("timing"));
            if (sj.contains("emotion")) c.emotion_split = ratios_from_json(sj.at("emotion"));
        }
        if (j.contains("encoder")) c.encoder = nn::ModelConfig::from_json(j.at("encoder"));
        if (j.contains("pretrain")) {
            const auto& pj = j.at("pretrain");
            c.pretrain = pj.value("enabled", c.pretrain);
            c.mask_rate = pj.value("mask_rate", c.mask_rate);
            if (pj.contains("train")) c.mlm_train = nn::TrainConfig::from_json(pj.at("train"), c.mlm_train);
        }
        if (j.contains("timing") && j.at("timing").contains("train")) {
            c.timing_train = nn::TrainConfig::from_json(j.at("timing").at("train"), c.timing_train);
        }
        if (j.contains("emotion") && j.at("emotion").contains("train")) {
            c.emotion_train = nn::TrainConfig::from_json(j.at("emotion").at("train"), c.emotion_train);
        }
        if (j.contains("responder")) {
            const auto& rj = j.at("responder");
            c.threshold = rj.value("threshold", c.threshold);
            c.top_k = rj.value("top_k", c.top_k);
            if (rj.contains("aggregation")) c.aggregation = aggregation_from_string(rj.at("aggregation").get<std::string>());
        }
        if (j.contains("baseline")) c.baseline = baseline_mode_from_string(j.at("baseline").get<std::string>());
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed pipeline config: ") + e.what());
    }
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    return from_json(read_json(path), path.parent_path());
}

json PipelineConfig::to_json() const {
    json paths = json::array();
    for (const auto& p : corpus_paths) paths.push_back(p.string());
    json corpus_j = {{"paths", paths}, {"spoken_filter", spoken_filter.to_json()}};
    if (synthesis) corpus_j["synthesis"] = synthesis->to_json();
    return {{"seed", seed},
            {"output_dir", output_dir.string()},
            {"corpus", corpus_j},
            {"tokenizer", text::to_string(tokenizer)},
            {"min_freq", min_freq},
            {"rules", rules.to_json()},
            {"lexicon", lexicon.to_json()},
            {"noun", noun.to_json()},
            {"splits", {{"timing", timing_split}, {"emotion", emotion_split}}},
            {"encoder", encoder.to_json()},
            {"pretrain", {{"enabled", pretrain}, {"mask_rate", mask_rate}, {"train", mlm_train.to_json()}}},
            {"timing", {{"train", timing_train.to_json()}}},
            {"emotion", {{"train", emotion_train.to_json()}}},
            {"responder", {{"threshold", threshold}, {"top_k", top_k}, {"aggregation", to_string(aggregation)}}},
            {"baseline", to_string(baseline)}};
}

void PipelineConfig::validate() const {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0,1]");
    if (top_k < 1) throw ConfigError("top_k must be at least 1");
    if (min_freq < 1) throw ConfigError("min_freq must be at least 1");
    for (const auto& [name, ratios] : {std::pair{"timing", timing_split}, std::pair{"emotion", emotion_split}}) {
        corpus::SplitSpec{ratios, seed}.validate();
        if (ratios[1] <= 0.0) throw ConfigError(std::string(name) + " dev ratio is 0; model selection needs a dev split");
        if (ratios[2] <= 0.0) throw ConfigError(std::string(name) + " test ratio is 0; evaluation needs a test split");
    }
    if (corpus_paths.empty() && !synthesis) throw ConfigError("config names neither corpus paths nor a synthesis spec");
    for (const auto& p : corpus_paths) {
        if (!fs::exists(p)) throw ConfigError("corpus file not found: " + p.string());
    }
    if (synthesis) synthesis->validate();
    rules.validate();
    lexicon.validate();
    if (encoder.embed_dim == 0 || encoder.hidden_dim == 0 || encoder.max_len == 0) {
        throw ConfigError("encoder dimensions must be positive");
    }
    if (pretrain && !(mask_rate > 0.0 && mask_rate < 1.0)) throw ConfigError("mask_rate must lie in (0,1)");
    mlm_train.validate();
    timing_train.validate();
    emotion_train.validate();
}

// ---- data -----------------------------------------------------------------------------------

std::vector<corpus::Dialogue> load_or_synthesize(const PipelineConfig& cfg) {
    std::vector<corpus::Dialogue> out;
    if (!cfg.corpus_paths.empty()) {
        for (const auto& p : cfg.corpus_paths) {
            auto part = corpus::load_dialogues(p);
            out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
        }
        return out;
    }
    if (!cfg.synthesis) throw ConfigError("config names neither corpus paths nor a synthesis spec");
    return corpus::generate_synthetic(*cfg.synthesis, cfg.seed_for("synthesis"));
}

PreparedData prepare_data(const PipelineConfig& cfg) { return prepare_data(cfg, load_or_synthesize(cfg)); }

PreparedData prepare_data(const PipelineConfig& cfg, std::vector<corpus::Dialogue> dialogues) {
    PreparedData data;
    std::vector<corpus::LabeledExample> timing;
    std::vector<corpus::LabeledExample> emotion;
    for (auto& d : dialogues) {
        if (d.source == corpus::Source::SpokenCorpus) d = corpus::preprocess_spoken(d, cfg.spoken_filter);
        if (d.turns.size() >= 2) {
            auto ex = corpus::annotate_validation(d, cfg.rules);
            timing.insert(timing.end(), ex.begin(), ex.end());
        }
        if (auto e = corpus::emotion_example(d)) emotion.push_back(std::move(*e));
    }
    if (timing.empty()) throw DataError("corpus yields no timing examples");
    if (emotion.empty()) throw DataError("corpus has no emotion-labelled dialogues");
    data.timing = corpus::split_dataset(timing, {cfg.timing_split, cfg.seed_for("split-timing")});
    data.emotion = corpus::split_dataset(emotion, {cfg.emotion_split, cfg.seed_for("split-emotion")});
    data.dialogues = std::move(dialogues);
    return data;
}

text::Vocabulary build_vocabulary(const PreparedData& data, const PipelineConfig& cfg) {
    std::vector<text::TokenSequence> seqs;
    for (const auto* split : {&data.timing.train, &data.emotion.train}) {
        for (const auto& ex : *split) seqs.push_back(text::tokenize(unicode::nfkc(ex.context), cfg.tokenizer));
    }
    return text::Vocabulary::build(seqs, cfg.min_freq, cfg.tokenizer);
}

// Context strings may carry turn separators from context construction, so only NFKC is applied.
text::TokenSequence encode_text(std::string_view input, const text::Vocabulary& vocab, std::size_t max_len) {
    auto seq = text::tokenize(unicode::nfkc(input), vocab.mode());
    text::encode_in_place(seq, vocab);
    text::truncate_front(seq, max_len);
    return seq;
}

std::vector<nn::LabeledIds> encode_examples(std::span<const corpus::LabeledExample> examples, Task task,
                                            const text::Vocabulary& vocab, std::size_t max_len) {
    std::vector<nn::LabeledIds> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        nn::LabeledIds li;
        if (task == Task::Timing) {
            if (!ex.timing_label) throw DataError("example " + ex.dialogue_id + " has no timing label");
            li.label = static_cast<int>(*ex.timing_label);
        } else {
            if (!ex.emotion_label) throw DataError("example " + ex.dialogue_id + " has no emotion label");
            li.label = corpus::index_of(*ex.emotion_label);
        }
        li.ids = encode_text(ex.context, vocab, max_len).ids;
        if (li.ids.empty()) throw DataError("example " + ex.dialogue_id + " has an empty context");
        out.push_back(std::move(li));
    }
    return out;
}

// ---- random baseline ----------------------------------------------------------------------------

std::vector<double> label_distribution(std::span<const int> labels, std::size_t num_classes) {
    if (labels.empty()) throw PreconditionError("label distribution of an empty label set");
    std::vector<double> dist(num_classes, 0.0);
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= num_classes) throw DataError("label out of range");
        dist[static_cast<std::size_t>(l)] += 1.0;
    }
    for (auto& p : dist) p /= static_cast<double>(labels.size());
    return dist;
}

std::vector<int> random_predictions(std::size_t n, std::span<const double> distribution, std::uint64_t seed) {
    if (distribution.empty()) throw PreconditionError("empty label distribution");
    const double total = std::accumulate(distribution.begin(), distribution.end(), 0.0);
    if (!(total > 0.0)) throw PreconditionError("label distribution has no mass");
    Rng rng(seed);
    std::vector<int> out(n);
    for (auto& y : out) {
        const double r = rng.uniform() * total;
        double acc = 0.0;
        std::size_t c = 0;
        for (; c + 1 < distribution.size(); ++c) {
            acc += distribution[c];
            if (r < acc) break;
        }
        y = static_cast<int>(c);
    }
    return out;
}

metrics::MetricReport run_random_baseline(std::span<const int> labels, std::span<const double> distribution,
                                          std::uint64_t seed, std::optional<int> target_class) {
    if (labels.empty()) throw PreconditionError("random baseline needs labels");
    const auto preds = random_predictions(labels.size(), distribution, seed);
    return metrics::classification_report(labels, preds, target_class);
}

// ---- evaluation records -------------------------------------------------------------------------

namespace {

struct Aggregates {
    metrics::MetricReport timing;
    metrics::MetricReport timing_baseline;
    metrics::MetricReport emotion;
    metrics::MetricReport emotion_baseline;
    json cause;
    json generation;
};

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Every reported metric is computed here from prediction records, both during
// the run and when recomputing from the persisted file.
Aggregates aggregate(std::span<const json> records) {
    std::vector<int> t_labels, t_preds, t_base;
    std::vector<int> e_labels, e_preds, e_base;
    std::vector<char> matched, matched_correct;
    std::vector<double> c_p, c_r, c_f1, c_bleu;
    std::vector<double> g_p, g_r, g_f1, g_bleu;
    std::map<std::string, std::size_t> branches;
    for (const auto& r : records) {
        const auto task = r.at("task").get<std::string>();
        if (task == "timing") {
            t_labels.push_back(r.at("label").get<int>());
            t_preds.push_back(r.at("prediction").get<int>());
            t_base.push_back(r.at("baseline").get<int>());
        } else if (task == "emotion") {
            const int label = r.at("label").get<int>();
            const int pred = r.at("prediction").get<int>();
            e_labels.push_back(label);
            e_preds.push_back(pred);
            e_base.push_back(r.at("baseline").get<int>());
            const bool m = r.at("cause_matched").get<bool>();
            matched.push_back(m);
            if (label == pred) matched_correct.push_back(m);
            const auto& ce = r.at("cause_embed");
            c_p.push_back(ce.at("precision").get<double>());
            c_r.push_back(ce.at("recall").get<double>());
            c_f1.push_back(ce.at("f1").get<double>());
            c_bleu.push_back(r.at("cause_bleu").get<double>());
            ++branches[r.at("branch").get<std::string>()];
            if (r.contains("reference")) {
                const auto& ge = r.at("generation_embed");
                g_p.push_back(ge.at("precision").get<double>());
                g_r.push_back(ge.at("recall").get<double>());
                g_f1.push_back(ge.at("f1").get<double>());
                g_bleu.push_back(r.at("generation_bleu").get<double>());
            }
        }
    }
    if (t_labels.empty() || e_labels.empty()) throw DataError("prediction records lack timing or emotion entries");
    Aggregates a;
    a.timing = metrics::classification_report(t_labels, t_preds, 1);
    a.timing_baseline = metrics::classification_report(t_labels, t_base, 1);
    a.emotion = metrics::classification_report(e_labels, e_preds);
    a.emotion_baseline = metrics::classification_report(e_labels, e_base);
    const auto acc = [](const std::vector<char>& v) {
        if (v.empty()) return 0.0;
        const auto hits = std::count(v.begin(), v.end(), char{1});
        return static_cast<double>(hits) / static_cast<double>(v.size());
    };
    a.cause = {{"accuracy", acc(matched)},
               {"accuracy_correct_emotion", acc(matched_correct)},
               {"examples", matched.size()},
               {"correct_emotion_examples", matched_correct.size()},
               {"embed_score", {{"precision", mean_of(c_p)}, {"recall", mean_of(c_r)}, {"f1", mean_of(c_f1)}}},
               {"bleu", mean_of(c_bleu)}};
    a.generation = {{"examples", g_f1.size()},
                    {"embed_score", {{"precision", mean_of(g_p)}, {"recall", mean_of(g_r)}, {"f1", mean_of(g_f1)}}},
                    {"bleu", mean_of(g_bleu)},
                    {"branches", branches}};
    return a;
}

json metrics_block(const Aggregates& a) {
    return {{"timing", a.timing.to_json()},
            {"timing_random_baseline", a.timing_baseline.to_json()},
            {"emotion", a.emotion.to_json()},
            {"emotion_random_baseline", a.emotion_baseline.to_json()},
            {"cause", a.cause},
            {"generation", a.generation}};
}

}  // namespace

json CorpusStats::to_json() const {
    json hist = json::object();
    for (std::size_t i = 0; i < corpus::kNumEmotions; ++i) hist[std::string(corpus::kEmotionNames[i])] = emotion_histogram[i];
    return {{"dialogues", dialogues},
            {"timing_examples", timing_examples},
            {"timing_positive_rate", timing_positive_rate},
            {"emotion_histogram", hist},
            {"timing_split_sizes", timing_split_sizes},
            {"emotion_split_sizes", emotion_split_sizes}};
}

json ExperimentReport::metrics_json() const {
    return {{"timing", timing.to_json()},
            {"timing_random_baseline", timing_baseline.to_json()},
            {"emotion", emotion.to_json()},
            {"emotion_random_baseline", emotion_baseline.to_json()},
            {"cause", cause},
            {"generation", generation}};
}

json ExperimentReport::to_json() const {
    json j = {{"config", config},
              {"corpus", stats.to_json()},
              {"metrics", metrics_json()},
              {"train_logs", train_logs},
              {"checkpoints", checkpoints}};
    return j;
}

json metrics_from_predictions(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open predictions file " + path.string());
    std::vector<json> records;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            records.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return metrics_block(aggregate(records));
}

// ---- experiment -----------------------------------------------------------------------------------

EmotionAnalysis analyze_emotion(const nn::Model& model, const text::Vocabulary& vocab, std::string_view utterance,
                                std::size_t top_k, saliency::Aggregation aggregation) {
    EmotionAnalysis a;
    a.tokens = encode_text(text::normalize_model_text(utterance), vocab, model.config().max_len);
    if (a.tokens.ids.empty()) throw PreconditionError("utterance is empty after normalization");
    a.prediction = model.predict(a.tokens.ids);
    a.saliency = saliency::token_scores(model, a.tokens.ids, a.prediction.label, aggregation);
    a.causes = saliency::top_k_causes(a.saliency, a.tokens, top_k);
    return a;
}

ExperimentReport run_experiment(const PipelineConfig& cfg_in) {
    const auto started = Clock::now();
    PipelineConfig cfg = cfg_in;
    stage("config", [&] { cfg.validate(); });
    cfg.mlm_train.seed = cfg.seed_for("mlm-train");
    cfg.timing_train.seed = cfg.seed_for("timing-train");
    cfg.emotion_train.seed = cfg.seed_for("emotion-train");
    cfg.timing_train.target_class = 1;

    const fs::path out = cfg.output_dir;
    stage("output", [&] { fs::create_directories(out / "checkpoints"); });

    ExperimentReport report;
    report.config = cfg.to_json();
    stage("output", [&] { write_text(out / "config.json", report.config.dump(2) + "\n"); });

    const PreparedData data = stage("annotate", [&] { return prepare_data(cfg); });
    stage("persist-data", [&] {
        corpus::save_dialogues(out / "data" / "dialogues.jsonl", data.dialogues);
        corpus::save_examples(out / "data" / "timing_train.jsonl", data.timing.train);
        corpus::save_examples(out / "data" / "timing_dev.jsonl", data.timing.dev);
        corpus::save_examples(out / "data" / "timing_test.jsonl", data.timing.test);
        corpus::save_examples(out / "data" / "emotion_train.jsonl", data.emotion.train);
        corpus::save_examples(out / "data" / "emotion_dev.jsonl", data.emotion.dev);
        corpus::save_examples(out / "data" / "emotion_test.jsonl", data.emotion.test);
    });

    auto& st = report.stats;
    st.dialogues = data.dialogues.size();
    std::size_t positives = 0;
    for (const auto* split : {&data.timing.train, &data.timing.dev, &data.timing.test}) {
        for (const auto& ex : *split) {
            ++st.timing_examples;
            if (ex.timing_label == corpus::TimingLabel::Validating) ++positives;
        }
    }
    st.timing_positive_rate = static_cast<double>(positives) / static_cast<double>(st.timing_examples);
    for (const auto* split : {&data.emotion.train, &data.emotion.dev, &data.emotion.test}) {
        for (const auto& ex : *split) ++st.emotion_histogram[static_cast<std::size_t>(corpus::index_of(*ex.emotion_label))];
    }
    st.timing_split_sizes = {data.timing.train.size(), data.timing.dev.size(), data.timing.test.size()};
    st.emotion_split_sizes = {data.emotion.train.size(), data.emotion.dev.size(), data.emotion.test.size()};

    const text::Vocabulary vocab = stage("vocabulary", [&] { return build_vocabulary(data, cfg); });
    stage("persist-vocabulary", [&] { write_text(out / "vocab.json", vocab.to_json().dump(2) + "\n"); });

    nn::ModelConfig enc = cfg.encoder;
    enc.vocab_size = vocab.size();
    const std::size_t max_len = enc.max_len;

    const auto timing_train = encode_examples(data.timing.train, Task::Timing, vocab, max_len);
    const auto timing_dev = encode_examples(data.timing.dev, Task::Timing, vocab, max_len);
    const auto timing_test = encode_examples(data.timing.test, Task::Timing, vocab, max_len);
    const auto emotion_train = encode_examples(data.emotion.train, Task::Emotion, vocab, max_len);
    const auto emotion_dev = encode_examples(data.emotion.dev, Task::Emotion, vocab, max_len);
    const auto emotion_test = encode_examples(data.emotion.test, Task::Emotion, vocab, max_len);

    json logs = json::object();
    json ckpts = json::object();
    const auto save = [&](const std::string& task, const nn::Model& model, const json& summary) {
        nn::Checkpoint ck{task, model, vocab, summary};
        const fs::path path = out / "checkpoints" / (task + ".json");
        nn::save_checkpoint(ck, path);
        ckpts[task] = {{"path", path.string()}, {"id", ck.id()}};
    };

    std::optional<nn::Model> encoder_source;
    if (cfg.pretrain) {
        auto mlm = stage("pretrain", [&] {
            std::vector<std::vector<int>> seqs;
            for (const auto& ex : timing_train) seqs.push_back(ex.ids);
            nn::ModelConfig mc = enc;
            mc.seed = cfg.seed_for("mlm-init");
            return nn::pretrain_mlm(nn::make_mlm_model(mc), seqs, cfg.mlm_train, cfg.mask_rate);
        });
        const json summary = {{"initial_loss", mlm.initial_loss},
                              {"final_loss", mlm.final_loss},
                              {"epoch_losses", mlm.epoch_losses},
                              {"steps", mlm.steps}};
        logs["mlm"] = summary;
        stage("persist-mlm", [&] {
            save("mlm", mlm.model, summary);
            std::string lines;
            for (std::size_t e = 0; e < mlm.epoch_losses.size(); ++e) {
                lines += json{{"epoch", e + 1}, {"loss", mlm.epoch_losses[e]}}.dump() + "\n";
            }
            write_text(out / "train_log_mlm.jsonl", lines);
        });
        encoder_source = mlm.model;
        report.mlm = std::move(mlm);
    }

    const auto initial = [&](std::size_t classes, const char* tag) {
        if (encoder_source) return nn::with_new_head(*encoder_source, classes, cfg.seed_for(std::string(tag) + "-head"));
        nn::ModelConfig mc = enc;
        mc.num_classes = classes;
        mc.seed = cfg.seed_for(std::string(tag) + "-init");
        return nn::Model::initialize(mc);
    };

    auto timing = stage("train-timing",
                        [&] { return nn::train_classifier(initial(2, "timing"), timing_train, timing_dev, cfg.timing_train); });
    logs["timing"] = timing.log.summary();
    stage("persist-timing", [&] {
        save("timing", timing.model, timing.log.summary());
        write_text(out / "train_log_timing.jsonl", timing.log.to_jsonl());
    });

    auto emotion = stage("train-emotion", [&] {
        return nn::train_classifier(initial(corpus::kNumEmotions, "emotion"), emotion_train, emotion_dev, cfg.emotion_train);
    });
    logs["emotion"] = emotion.log.summary();
    stage("persist-emotion", [&] {
        save("emotion", emotion.model, emotion.log.summary());
        write_text(out / "train_log_emotion.jsonl", emotion.log.to_jsonl());
    });
    report.train_logs = logs;
    report.checkpoints = ckpts;

    std::vector<json> records = stage("evaluate", [&] {
        std::vector<json> recs;
        const auto labels_of = [](const std::vector<nn::LabeledIds>& v) {
            std::vector<int> l;
            for (const auto& x : v) l.push_back(x.label);
            return l;
        };
        const auto distribution = [&](const std::vector<nn::LabeledIds>& train, std::size_t classes) {
            if (cfg.baseline == BaselineMode::Uniform) return std::vector<double>(classes, 1.0 / static_cast<double>(classes));
            return label_distribution(labels_of(train), classes);
        };

        // timing
        std::vector<std::vector<int>> inputs;
        for (const auto& x : timing_test) inputs.push_back(x.ids);
        const auto t_preds = nn::predict_batch(timing.model, inputs);
        const auto t_base =
            random_predictions(timing_test.size(), distribution(timing_train, 2), cfg.seed_for("baseline-timing"));
        for (std::size_t i = 0; i < timing_test.size(); ++i) {
            const auto& ex = data.timing.test[i];
            recs.push_back({{"task", "timing"},
                            {"dialogue_id", ex.dialogue_id},
                            {"turn", ex.turn},
                            {"label", timing_test[i].label},
                            {"prediction", t_preds[i].label},
                            {"confidence", t_preds[i].distribution[1]},
                            {"baseline", t_base[i]}});
        }

        // emotion, causes, generation
        std::unordered_map<std::string, const corpus::Dialogue*> by_id;
        for (const auto& d : data.dialogues) by_id[d.id] = &d;
        const auto e_base = random_predictions(emotion_test.size(), distribution(emotion_train, corpus::kNumEmotions),
                                               cfg.seed_for("baseline-emotion"));
        responder::ResponderConfig rcfg;
        rcfg.threshold = cfg.threshold;
        rcfg.noun = cfg.noun;
        const auto& model = emotion.model;
        for (std::size_t i = 0; i < emotion_test.size(); ++i) {
            const auto& ex = data.emotion.test[i];
            const auto an = analyze_emotion(model, vocab, ex.context, cfg.top_k, cfg.aggregation);
            const std::string gold = ex.cause_phrase.value_or("");
            json rec = {{"task", "emotion"},
                        {"dialogue_id", ex.dialogue_id},
                        {"turn", ex.turn},
                        {"label", emotion_test[i].label},
                        {"prediction", an.prediction.label},
                        {"confidence", an.prediction.confidence},
                        {"baseline", e_base[i]},
                        {"causes", causes_to_json(an.causes)},
                        {"cause_gold", gold}};
            const bool has_gold = !saliency::normalize_phrase(gold).empty();
            rec["cause_matched"] = has_gold && saliency::cause_match(an.causes, gold);
            const std::string best = an.causes.empty() ? std::string() : an.causes.front().phrase;
            const auto best_tokens = surface_tokens(best, cfg.tokenizer);
            const auto gold_tokens = surface_tokens(gold, cfg.tokenizer);
            if (!best_tokens.empty() && !gold_tokens.empty()) {
                rec["cause_embed"] = embed_to_json(metrics::embed_score(model, vocab, best_tokens, gold_tokens));
                rec["cause_bleu"] = metrics::bleu(best_tokens, gold_tokens);
            } else {
                rec["cause_embed"] = embed_to_json({});
                rec["cause_bleu"] = 0.0;
            }

            const auto gen = responder::generate_response(an.prediction, an.causes, cfg.lexicon, rcfg, ex.context);
            rec["response"] = gen.text;
            rec["branch"] = responder::to_string(gen.decision.branch);

            // Reference: the dialogue's own reply to this utterance, when it validates.
            const auto it = by_id.find(ex.dialogue_id);
            if (it != by_id.end() && ex.turn + 1 < it->second->turns.size()) {
                const std::string& reply = it->second->turns[ex.turn + 1].text;
                if (corpus::is_validating_response(reply, cfg.rules)) {
                    const auto cand = surface_tokens(gen.text, cfg.tokenizer);
                    const auto ref = surface_tokens(reply, cfg.tokenizer);
                    if (!cand.empty() && !ref.empty()) {
                        rec["reference"] = reply;
                        rec["generation_embed"] = embed_to_json(metrics::embed_score(model, vocab, cand, ref));
                        rec["generation_bleu"] = metrics::bleu(cand, ref);
                    }
                }
            }
            recs.push_back(std::move(rec));
        }
        return recs;
    });

    stage("persist-predictions", [&] {
        std::string body;
        for (const auto& r : records) body += r.dump() + "\n";
        write_text(out / "predictions.jsonl", body);
    });

    const Aggregates agg = stage("report", [&] { return aggregate(records); });
    report.timing = agg.timing;
    report.timing_baseline = agg.timing_baseline;
    report.emotion = agg.emotion;
    report.emotion_baseline = agg.emotion_baseline;
    report.cause = agg.cause;
    report.generation = agg.generation;
    report.seconds = std::chrono::duration<double>(Clock::now() - started).count();
    stage("persist-report", [&] {
        write_text(out / "report.json", report.to_json().dump(2) + "\n");
        write_text(out / "runtime.json", json{{"seconds", report.seconds}}.dump(2) + "\n");
    });
    return report;
}

// ---- per-turn inference ------------------------------------------------------------------------------

void Models::validate() const {
    if (timing.task != "timing") throw DataError("timing checkpoint has task '" + timing.task + "'");
    if (emotion.task != "emotion") throw DataError("emotion checkpoint has task '" + emotion.task + "'");
    if (timing.model.config().num_classes != 2) throw DataError("timing model must have 2 classes");
    if (emotion.model.config().num_classes != corpus::kNumEmotions) throw DataError("emotion model must have 8 classes");
    if (timing.vocab.fingerprint() != emotion.vocab.fingerprint()) {
        throw DataError("model/vocab mismatch: timing and emotion checkpoints use different vocabularies");
    }
    if (top_k < 1) throw ConfigError("top_k must be at least 1");
    lexicon.validate();
    rules.validate();
}

Models Models::load(const fs::path& timing_ckpt, const fs::path& emotion_ckpt, const PipelineConfig& cfg) {
    Models m{nn::load_checkpoint(timing_ckpt), nn::load_checkpoint(emotion_ckpt), cfg.rules, cfg.lexicon, {}, cfg.top_k,
             cfg.aggregation};
    m.responder.threshold = cfg.threshold;
    m.responder.noun = cfg.noun;
    m.validate();
    return m;
}

json TurnDecision::to_json() const {
    json j = {{"validate", validate},
              {"timing_confidence", timing_confidence},
              {"emotion", nullptr},
              {"emotion_confidence", nullptr},
              {"causes", causes_to_json(causes)},
              {"branch", nullptr},
              {"response", nullptr},
              {"latency_ms",
               {{"timing", latency_ms.timing},
                {"emotion", latency_ms.emotion},
                {"saliency", latency_ms.saliency},
                {"generation", latency_ms.generation}}}};
    if (emotion) j["emotion"] = corpus::to_string(*emotion);
    if (emotion_confidence) j["emotion_confidence"] = *emotion_confidence;
    if (branch) j["branch"] = responder::to_string(*branch);
    if (response) j["response"] = *response;
    return j;
}

TurnDecision decide_turn(const Models& models, std::span<const corpus::Utterance> history, std::string_view user_text) {
    const std::string cleaned = text::normalize_model_text(user_text);
    if (unicode::strip_whitespace(cleaned).empty()) throw PreconditionError("message is empty after normalization");

    TurnDecision d;
    auto t = Clock::now();
    std::vector<corpus::Utterance> turns(history.begin(), history.end());
    turns.push_back({corpus::Speaker::A, std::string(user_text), turns.size()});
    const std::string context = corpus::build_timing_context(turns, turns.size() - 1);
    const auto& tm = models.timing.model;
    const auto tseq = encode_text(context, models.timing.vocab, tm.config().max_len);
    const auto tpred = tm.predict(tseq.ids);
    d.timing_confidence = tpred.distribution[1];
    d.validate = tpred.label == 1;
    d.latency_ms.timing = ms_since(t);
    if (!d.validate) return d;

    const auto& em = models.emotion.model;
    t = Clock::now();
    const auto eseq = encode_text(cleaned, models.emotion.vocab, em.config().max_len);
    const auto epred = em.predict(eseq.ids);
    d.emotion = corpus::emotion_from_index(epred.label);
    d.emotion_confidence = epred.confidence;
    d.latency_ms.emotion = ms_since(t);

    t = Clock::now();
    const auto sal = saliency::token_scores(em, eseq.ids, epred.label, models.aggregation);
    d.causes = saliency::top_k_causes(sal, eseq, models.top_k);
    d.latency_ms.saliency = ms_since(t);

    t = Clock::now();
    const auto gen = responder::generate_response(epred, d.causes, models.lexicon, models.responder, cleaned);
    d.response = gen.text;
    d.branch = gen.decision.branch;
    d.latency_ms.generation = ms_since(t);
    return d;
}

}  // namespace valresp::pipeline
