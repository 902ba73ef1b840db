#include "valresp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "valresp/error.hpp"
#include "valresp/rng.hpp"
#include "valresp/text.hpp"
#include "valresp/unicode.hpp"

namespace valresp::corpus {

using nlohmann::json;

// ---- labels -------------------------------------------------------------------

std::string_view to_string(Emotion e) { return kEmotionNames.at(static_cast<std::size_t>(e)); }

std::optional<Emotion> try_parse_emotion(std::string_view name) {
    for (std::size_t i = 0; i < kEmotionNames.size(); ++i) {
        if (kEmotionNames[i] == name) return static_cast<Emotion>(i);
    }
    return std::nullopt;
}

Emotion parse_emotion(std::string_view name) {
    if (auto e = try_parse_emotion(name)) return *e;
    std::string msg = "invalid emotion label '" + std::string(name) + "'; permitted:";
    for (auto n : kEmotionNames) msg += " " + std::string(n);
    throw DataError(msg);
}

Emotion emotion_from_index(int index) {
    if (index < 0 || index >= static_cast<int>(kNumEmotions)) {
        throw DataError("emotion index " + std::to_string(index) + " out of range");
    }
    return static_cast<Emotion>(index);
}

std::string_view to_string(Source s) {
    switch (s) {
        case Source::TextCorpus: return "text_corpus";
        case Source::SpokenCorpus: return "spoken_corpus";
        case Source::Synthetic: return "synthetic";
    }
    return "text_corpus";
}

namespace {

Source parse_source(std::string_view name) {
    if (name == "text_corpus") return Source::TextCorpus;
    if (name == "spoken_corpus") return Source::SpokenCorpus;
    if (name == "synthetic") return Source::Synthetic;
    throw DataError("invalid source '" + std::string(name) + "' (expected text_corpus|spoken_corpus|synthetic)");
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw DataError("read failure on " + path.string());
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot write " + path.string());
    out << contents;
    if (!out) throw RuntimeError("write failure on " + path.string());
}

json parse_json_file(const std::filesystem::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

template <typename F>
void for_each_jsonl(const std::string& contents, const std::string& where, F&& f) {
    std::istringstream in(contents);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (unicode::trim(line).empty()) continue;
        try {
            f(json::parse(line));
        } catch (const json::exception& e) {
            throw DataError(where + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
        } catch (const DataError& e) {
            throw DataError(where + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

std::vector<std::string> string_list(const json& j, const char* key) {
    if (!j.contains(key)) return {};
    return j.at(key).get<std::vector<std::string>>();
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
    return s;
}

std::string sanitize_turn(std::string_view text) {
    return replace_all(std::string(text), text::kTurnSeparator, " ");
}

}  // namespace

std::string_view to_string(TimingLabel t) {
    return t == TimingLabel::Validating ? "validating" : "non_validating";
}

TimingLabel parse_timing_label(std::string_view name) {
    if (name == "validating") return TimingLabel::Validating;
    if (name == "non_validating") return TimingLabel::NonValidating;
    throw DataError("invalid timing label '" + std::string(name) + "'");
}

// ---- dialogue IO --------------------------------------------------------------

json to_json(const Dialogue& d) {
    json turns = json::array();
    for (const auto& u : d.turns) {
        turns.push_back({{"speaker", u.speaker == Speaker::A ? "A" : "B"}, {"text", u.text}});
    }
    json j = {{"id", d.id}, {"source", to_string(d.source)}, {"turns", std::move(turns)}};
    if (d.gold_emotion) j["emotion"] = to_string(*d.gold_emotion);
    if (d.gold_cause) j["cause"] = *d.gold_cause;
    return j;
}

Dialogue dialogue_from_json(const json& j) {
    Dialogue d;
    d.id = j.at("id").get<std::string>();
    if (d.id.empty()) throw DataError("dialogue id is empty");
    d.source = parse_source(j.value("source", std::string("text_corpus")));
    for (const auto& t : j.at("turns")) {
        Utterance u;
        const auto speaker = t.at("speaker").get<std::string>();
        if (speaker == "A") {
            u.speaker = Speaker::A;
        } else if (speaker == "B") {
            u.speaker = Speaker::B;
        } else {
            throw DataError("dialogue " + d.id + ": speaker must be A or B, got '" + speaker + "'");
        }
        u.text = t.at("text").get<std::string>();
        if (unicode::trim(unicode::nfkc(u.text)).empty()) {
            throw DataError("dialogue " + d.id + ": turn " + std::to_string(d.turns.size()) + " has empty text");
        }
        u.index = d.turns.size();
        d.turns.push_back(std::move(u));
    }
    if (d.source == Source::TextCorpus) {
        for (std::size_t i = 1; i < d.turns.size(); ++i) {
            if (d.turns[i].speaker == d.turns[i - 1].speaker) {
                throw DataError("dialogue " + d.id + ": text-corpus turns must alternate speakers (turn " +
                                std::to_string(i) + ")");
            }
        }
    }
    if (j.contains("emotion") && !j.at("emotion").is_null()) {
        d.gold_emotion = parse_emotion(j.at("emotion").get<std::string>());
    }
    if (j.contains("cause") && !j.at("cause").is_null()) d.gold_cause = j.at("cause").get<std::string>();
    return d;
}

std::vector<Dialogue> load_dialogues(const std::filesystem::path& path) {
    std::vector<Dialogue> out;
    std::unordered_set<std::string> ids;
    for_each_jsonl(read_file(path), path.string(), [&](const json& j) {
        Dialogue d = dialogue_from_json(j);
        if (!ids.insert(d.id).second) throw DataError("duplicate dialogue id '" + d.id + "'");
        out.push_back(std::move(d));
    });
    return out;
}

std::string dialogues_to_jsonl(std::span<const Dialogue> dialogues) {
    std::string out;
    for (const auto& d : dialogues) {
        out += to_json(d).dump();
        out += '\n';
    }
    return out;
}

void save_dialogues(const std::filesystem::path& path, std::span<const Dialogue> dialogues) {
    write_file(path, dialogues_to_jsonl(dialogues));
}

json to_json(const LabeledExample& e) {
    json j = {{"dialogue_id", e.dialogue_id}, {"turn", e.turn}, {"context", e.context}};
    if (e.timing_label) j["timing_label"] = to_string(*e.timing_label);
    if (e.emotion_label) j["emotion_label"] = to_string(*e.emotion_label);
    if (e.cause_phrase) j["cause_phrase"] = *e.cause_phrase;
    return j;
}

LabeledExample example_from_json(const json& j) {
    LabeledExample e;
    e.dialogue_id = j.at("dialogue_id").get<std::string>();
    e.turn = j.value("turn", std::size_t{0});
    e.context = j.at("context").get<std::string>();
    if (j.contains("timing_label")) e.timing_label = parse_timing_label(j.at("timing_label").get<std::string>());
    if (j.contains("emotion_label")) e.emotion_label = parse_emotion(j.at("emotion_label").get<std::string>());
    if (j.contains("cause_phrase")) e.cause_phrase = j.at("cause_phrase").get<std::string>();
    if (!e.timing_label && !e.emotion_label) throw DataError("example carries no label");
    return e;
}

std::vector<LabeledExample> load_examples(const std::filesystem::path& path) {
    std::vector<LabeledExample> out;
    for_each_jsonl(read_file(path), path.string(), [&](const json& j) { out.push_back(example_from_json(j)); });
    return out;
}

void save_examples(const std::filesystem::path& path, std::span<const LabeledExample> examples) {
    std::string out;
    for (const auto& e : examples) {
        out += to_json(e).dump();
        out += '\n';
    }
    write_file(path, out);
}

// ---- annotation ---------------------------------------------------------------------

PhraseRuleSet PhraseRuleSet::from_json(const json& j) {
    try {
        PhraseRuleSet r;
        r.literal_patterns = string_list(j, "literal_patterns");
        if (j.contains("emotion_frame")) {
            const auto& f = j.at("emotion_frame");
            r.emotion_frame.prefix = f.value("prefix", r.emotion_frame.prefix);
            r.emotion_frame.suffix = f.value("suffix", r.emotion_frame.suffix);
            r.emotion_frame.max_gap = f.value("max_gap", r.emotion_frame.max_gap);
            r.emotion_frame.emotion_words = string_list(f, "emotion_words");
        }
        const auto norm = j.value("normalization", std::string("unicode_compat"));
        if (norm == "unicode_compat") {
            r.normalization = Normalization::UnicodeCompat;
        } else if (norm == "none") {
            r.normalization = Normalization::None;
        } else {
            throw ConfigError("unknown normalization '" + norm + "'");
        }
        if (j.contains("variants")) {
            for (const auto& pair : j.at("variants")) {
                r.variants.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
            }
        }
        r.validate();
        return r;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed phrase rule set: ") + e.what());
    }
}

PhraseRuleSet PhraseRuleSet::load(const std::filesystem::path& path) { return from_json(parse_json_file(path)); }

json PhraseRuleSet::to_json() const {
    json variants_json = json::array();
    for (const auto& [from, to] : variants) variants_json.push_back({from, to});
    return {{"literal_patterns", literal_patterns},
            {"emotion_frame",
             {{"prefix", emotion_frame.prefix},
              {"suffix", emotion_frame.suffix},
              {"max_gap", emotion_frame.max_gap},
              {"emotion_words", emotion_frame.emotion_words}}},
            {"normalization", normalization == Normalization::UnicodeCompat ? "unicode_compat" : "none"},
            {"variants", variants_json}};
}

void PhraseRuleSet::validate() const {
    if (literal_patterns.empty() && emotion_frame.emotion_words.empty()) {
        throw ConfigError("phrase rule set is empty");
    }
    for (const auto& p : literal_patterns) {
        if (normalize_for_matching(p, *this).empty()) throw ConfigError("literal pattern '" + p + "' is empty");
    }
    if (!emotion_frame.emotion_words.empty()) {
        if (normalize_for_matching(emotion_frame.prefix, *this).empty() ||
            normalize_for_matching(emotion_frame.suffix, *this).empty()) {
            throw ConfigError("emotion frame prefix/suffix must be non-empty");
        }
        for (const auto& w : emotion_frame.emotion_words) {
            if (normalize_for_matching(w, *this).empty()) throw ConfigError("emotion frame word is empty");
        }
    }
    for (const auto& [from, to] : variants) {
        if (from.empty()) throw ConfigError("variant source spelling is empty");
    }
}

std::string normalize_for_matching(std::string_view text, const PhraseRuleSet& rules) {
    std::string s(text);
    if (rules.normalization == Normalization::UnicodeCompat) s = unicode::strip_whitespace(unicode::nfkc(s));
    for (const auto& [from, to] : rules.variants) s = replace_all(std::move(s), from, to);
    return s;
}

bool is_validating_response(std::string_view response, const PhraseRuleSet& rules) {
    const std::string text = normalize_for_matching(response, rules);
    for (const auto& p : rules.literal_patterns) {
        if (text.find(normalize_for_matching(p, rules)) != std::string::npos) return true;
    }
    const auto& frame = rules.emotion_frame;
    if (frame.emotion_words.empty()) return false;
    const std::string prefix = normalize_for_matching(frame.prefix, rules);
    const std::string suffix = normalize_for_matching(frame.suffix, rules);
    for (const auto& word : frame.emotion_words) {
        const std::string head = prefix + normalize_for_matching(word, rules);
        for (std::size_t at = text.find(head); at != std::string::npos; at = text.find(head, at + 1)) {
            const std::size_t word_end = at + head.size();
            const std::size_t s = text.find(suffix, word_end);
            if (s == std::string::npos) break;
            if (unicode::codepoint_count(std::string_view(text).substr(word_end, s - word_end)) <= frame.max_gap) {
                return true;
            }
        }
    }
    return false;
}

std::string join_context(std::span<const std::string> utterances) {
    std::string out;
    for (std::size_t i = 0; i < utterances.size(); ++i) {
        if (i > 0) {
            out += ' ';
            out += text::kTurnSeparator;
            out += ' ';
        }
        out += sanitize_turn(utterances[i]);
    }
    return out;
}

std::string build_timing_context(std::span<const Utterance> turns, std::size_t target_turn) {
    if (target_turn >= turns.size()) {
        throw PreconditionError("target turn " + std::to_string(target_turn) + " out of range for " +
                                std::to_string(turns.size()) + " turns");
    }
    const std::size_t first = target_turn + 1 >= kContextWindow ? target_turn + 1 - kContextWindow : 0;
    std::vector<std::string> window;
    for (std::size_t i = first; i <= target_turn; ++i) window.push_back(turns[i].text);
    return join_context(window);
}

std::string build_timing_context(const Dialogue& dialogue, std::size_t target_turn) {
    return build_timing_context(std::span<const Utterance>(dialogue.turns), target_turn);
}

std::vector<LabeledExample> annotate_validation(const Dialogue& dialogue, const PhraseRuleSet& rules) {
    rules.validate();
    if (dialogue.turns.size() < 2) {
        throw PreconditionError("dialogue " + dialogue.id + " has fewer than 2 turns");
    }
    std::vector<LabeledExample> out;
    out.reserve(dialogue.turns.size() - 1);
    for (std::size_t i = 0; i + 1 < dialogue.turns.size(); ++i) {
        LabeledExample e;
        e.dialogue_id = dialogue.id;
        e.turn = i;
        e.context = build_timing_context(dialogue, i);
        e.timing_label = is_validating_response(dialogue.turns[i + 1].text, rules) ? TimingLabel::Validating
                                                                                  : TimingLabel::NonValidating;
        out.push_back(std::move(e));
    }
    return out;
}

std::optional<LabeledExample> emotion_example(const Dialogue& dialogue) {
    if (!dialogue.gold_emotion || dialogue.turns.empty()) return std::nullopt;
    std::optional<std::size_t> turn;
    if (dialogue.gold_cause) {
        for (const auto& u : dialogue.turns) {
            if (u.text.find(*dialogue.gold_cause) != std::string::npos) {
                turn = u.index;
                break;
            }
        }
    }
    if (!turn) {
        for (const auto& u : dialogue.turns) {
            if (u.speaker == Speaker::A) {
                turn = u.index;
                break;
            }
        }
    }
    if (!turn) turn = 0;
    LabeledExample e;
    e.dialogue_id = dialogue.id;
    e.turn = *turn;
    e.context = sanitize_turn(dialogue.turns[*turn].text);
    e.emotion_label = dialogue.gold_emotion;
    e.cause_phrase = dialogue.gold_cause;
    return e;
}

// ---- spoken preprocessing -------------------------------------------------------------

SpokenFilterConfig SpokenFilterConfig::from_json(const json& j) {
    try {
        SpokenFilterConfig c;
        c.backchannel_list = string_list(j, "backchannel_list");
        c.laughter_markers = string_list(j, "laughter_markers");
        c.filler_list = string_list(j, "filler_list");
        c.max_tail_words = j.value("max_tail_words", c.max_tail_words);
        if (c.max_tail_words < 1) throw ConfigError("max_tail_words must be >= 1");
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed spoken filter config: ") + e.what());
    }
}

SpokenFilterConfig SpokenFilterConfig::load(const std::filesystem::path& path) {
    return from_json(parse_json_file(path));
}

json SpokenFilterConfig::to_json() const {
    return {{"backchannel_list", backchannel_list},
            {"laughter_markers", laughter_markers},
            {"filler_list", filler_list},
            {"max_tail_words", max_tail_words}};
}

Dialogue preprocess_spoken(const Dialogue& dialogue, const SpokenFilterConfig& cfg) {
    if (dialogue.source != Source::SpokenCorpus) {
        throw PreconditionError("dialogue " + dialogue.id + " is not from a spoken corpus");
    }
    if (cfg.max_tail_words < 1) throw ConfigError("max_tail_words must be >= 1");
    const auto key = [](std::string_view s) { return unicode::trim(unicode::nfkc(s)); };
    std::unordered_set<std::string> drop;
    for (const auto* list : {&cfg.backchannel_list, &cfg.laughter_markers, &cfg.filler_list}) {
        for (const auto& item : *list) drop.insert(key(item));
    }
    Dialogue out = dialogue;
    out.turns.clear();
    for (const auto& u : dialogue.turns) {
        if (drop.contains(key(u.text))) continue;
        Utterance kept = u;
        const auto words = unicode::word_spans(u.text);
        if (words.size() > cfg.max_tail_words) {
            const auto begin = words[words.size() - cfg.max_tail_words].begin;
            kept.text = u.text.substr(begin, words.back().end - begin);
        }
        kept.index = out.turns.size();
        out.turns.push_back(std::move(kept));
    }
    return out;
}

// ---- splitting ---------------------------------------------------------------------------

void SplitSpec::validate() const {
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("split ratios must lie in [0,1]");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("split ratios must sum to 1 (got " + std::to_string(sum) + ")");
    }
}

Splits split_dataset(std::span<const LabeledExample> examples, const SplitSpec& spec) {
    spec.validate();
    if (examples.empty()) throw PreconditionError("cannot split an empty example list");

    std::vector<std::string> group_ids;
    std::map<std::string, std::size_t> group_size;
    for (const auto& e : examples) {
        if (group_size[e.dialogue_id]++ == 0) group_ids.push_back(e.dialogue_id);
    }
    Rng rng(spec.seed);
    rng.shuffle(std::span<std::string>(group_ids));

    // Each group goes to the open split with the largest remaining deficit.
    const double total = static_cast<double>(examples.size());
    std::array<double, 3> filled{0.0, 0.0, 0.0};
    std::map<std::string, int> assignment;
    for (const auto& g : group_ids) {
        int best = -1;
        double best_deficit = 0.0;
        for (int k = 0; k < 3; ++k) {
            if (spec.ratios[k] <= 0.0) continue;
            const double deficit = spec.ratios[k] * total - filled[k];
            if (best < 0 || deficit > best_deficit) {
                best = k;
                best_deficit = deficit;
            }
        }
        assignment[g] = best;
        filled[best] += static_cast<double>(group_size[g]);
    }

    Splits out;
    for (const auto& e : examples) {
        switch (assignment[e.dialogue_id]) {
            case 0: out.train.push_back(e); break;
            case 1: out.dev.push_back(e); break;
            default: out.test.push_back(e); break;
        }
    }
    return out;
}

// ---- synthetic corpus ------------------------------------------------------------------

SynthesisConfig SynthesisConfig::from_json(const json& j) {
    try {
        SynthesisConfig c;
        c.num_dialogues = j.value("num_dialogues", c.num_dialogues);
        c.validating_rate = j.value("validating_rate", c.validating_rate);
        c.lead_in_rate = j.value("lead_in_rate", c.lead_in_rate);
        c.follow_up_rate = j.value("follow_up_rate", c.follow_up_rate);
        const auto& kw = j.at("keywords");
        for (std::size_t i = 0; i < kNumEmotions; ++i) {
            const std::string name(kEmotionNames[i]);
            if (kw.contains(name)) c.keywords[i] = kw.at(name).get<std::vector<std::string>>();
        }
        if (j.contains("emotion_words")) {
            for (std::size_t i = 0; i < kNumEmotions; ++i) {
                c.emotion_words[i] = j.at("emotion_words").value(std::string(kEmotionNames[i]), std::string());
            }
        }
        c.openers = string_list(j, "openers");
        c.listener_turns = string_list(j, "listener_turns");
        c.templates = string_list(j, "templates");
        c.eliciting_cues = string_list(j, "eliciting_cues");
        c.neutral_cues = string_list(j, "neutral_cues");
        c.validating_responses = string_list(j, "validating_responses");
        c.neutral_responses = string_list(j, "neutral_responses");
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed synthesis config: ") + e.what());
    }
}

SynthesisConfig SynthesisConfig::load(const std::filesystem::path& path) { return from_json(parse_json_file(path)); }

json SynthesisConfig::to_json() const {
    json kw = json::object();
    json words = json::object();
    for (std::size_t i = 0; i < kNumEmotions; ++i) {
        kw[std::string(kEmotionNames[i])] = keywords[i];
        words[std::string(kEmotionNames[i])] = emotion_words[i];
    }
    return {{"num_dialogues", num_dialogues},
            {"validating_rate", validating_rate},
            {"lead_in_rate", lead_in_rate},
            {"follow_up_rate", follow_up_rate},
            {"keywords", kw},
            {"emotion_words", words},
            {"openers", openers},
            {"listener_turns", listener_turns},
            {"templates", templates},
            {"eliciting_cues", eliciting_cues},
            {"neutral_cues", neutral_cues},
            {"validating_responses", validating_responses},
            {"neutral_responses", neutral_responses}};
}

void SynthesisConfig::validate() const {
    if (!(validating_rate >= 0.0 && validating_rate <= 1.0)) throw ConfigError("validating_rate must lie in [0,1]");
    if (!(lead_in_rate >= 0.0 && lead_in_rate <= 1.0)) throw ConfigError("lead_in_rate must lie in [0,1]");
    if (!(follow_up_rate >= 0.0 && follow_up_rate <= 1.0)) throw ConfigError("follow_up_rate must lie in [0,1]");
    std::vector<std::string> all_keywords;
    for (std::size_t i = 0; i < kNumEmotions; ++i) {
        if (keywords[i].empty()) {
            throw ConfigError("synthesis config has no keyword for emotion '" + std::string(kEmotionNames[i]) + "'");
        }
        for (const auto& k : keywords[i]) {
            if (k.empty()) throw ConfigError("empty keyword");
            all_keywords.push_back(k);
        }
    }
    for (const auto& a : all_keywords) {
        for (const auto& b : all_keywords) {
            if (&a != &b && b.find(a) != std::string::npos) {
                throw ConfigError("keyword '" + a + "' occurs inside keyword '" + b + "'");
            }
        }
    }
    const auto require = [](const std::vector<std::string>& v, const char* name) {
        if (v.empty()) throw ConfigError(std::string("synthesis config list '") + name + "' is empty");
    };
    require(openers, "openers");
    require(listener_turns, "listener_turns");
    require(templates, "templates");
    require(eliciting_cues, "eliciting_cues");
    require(neutral_cues, "neutral_cues");
    require(validating_responses, "validating_responses");
    require(neutral_responses, "neutral_responses");
    for (const auto& t : templates) {
        if (t.find("{keyword}") == std::string::npos || t.find("{cue}") == std::string::npos) {
            throw ConfigError("template '" + t + "' must contain {keyword} and {cue}");
        }
    }
    for (const auto* list : {&openers, &listener_turns, &templates, &eliciting_cues, &neutral_cues}) {
        for (const auto& s : *list) {
            for (const auto& k : all_keywords) {
                if (s.find(k) != std::string::npos) {
                    throw ConfigError("filler text '" + s + "' contains keyword '" + k + "'");
                }
            }
        }
    }
}

std::vector<Dialogue> generate_synthetic(const SynthesisConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const auto pick = [&rng](const std::vector<std::string>& v) -> const std::string& {
        return v[static_cast<std::size_t>(rng.below(v.size()))];
    };
    std::vector<Dialogue> out;
    out.reserve(cfg.num_dialogues);
    for (std::size_t n = 0; n < cfg.num_dialogues; ++n) {
        const auto label = static_cast<std::size_t>(rng.below(kNumEmotions));
        const std::string& keyword = pick(cfg.keywords[label]);
        const std::string& opener = pick(cfg.openers);
        const std::string& listener = pick(cfg.listener_turns);
        const std::string& tmpl = pick(cfg.templates);
        const bool validating = rng.bernoulli(cfg.validating_rate);
        const bool lead_in = rng.bernoulli(cfg.lead_in_rate);
        const bool follow_up = rng.bernoulli(cfg.follow_up_rate);
        const std::string& cue = pick(validating ? cfg.eliciting_cues : cfg.neutral_cues);
        std::string speaker = replace_all(replace_all(tmpl, "{keyword}", keyword), "{cue}", cue);
        std::string response = validating
                                   ? replace_all(pick(cfg.validating_responses), "{emotion_word}", cfg.emotion_words[label])
                                   : pick(cfg.neutral_responses);

        char id[32];
        std::snprintf(id, sizeof id, "syn-%05zu", n);
        Dialogue d;
        d.id = id;
        d.source = Source::Synthetic;
        d.gold_emotion = static_cast<Emotion>(label);
        d.gold_cause = keyword;
        if (lead_in) {
            d.turns.push_back({Speaker::A, opener, 0});
            d.turns.push_back({Speaker::B, listener, 1});
        }
        d.turns.push_back({Speaker::A, std::move(speaker), d.turns.size()});
        d.turns.push_back({Speaker::B, std::move(response), d.turns.size()});
        if (follow_up) {
            d.turns.push_back({Speaker::A, pick(cfg.openers), d.turns.size()});
            d.turns.push_back({Speaker::B, pick(cfg.neutral_responses), d.turns.size()});
        }
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace valresp::corpus
