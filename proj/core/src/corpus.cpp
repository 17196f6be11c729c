#include "gnnsl/corpus.hpp"

#include <algorithm>
#include <random>
#include <sstream>

namespace gnnsl::corpus {

LabelScheme scheme_from_string(const std::string& s) {
    if (s == "bio" || s == "BIO") return LabelScheme::BIO;
    if (s == "bmes" || s == "BMES") return LabelScheme::BMES;
    if (s == "plain" || s == "PLAIN") return LabelScheme::PLAIN;
    throw ArgumentError("unknown label scheme: " + s);
}

std::string scheme_to_string(LabelScheme s) {
    switch (s) {
        case LabelScheme::BIO: return "BIO";
        case LabelScheme::BMES: return "BMES";
        case LabelScheme::PLAIN: return "PLAIN";
    }
    return "?";
}

int LabelSet::find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return int(i);
    }
    return -1;
}

int LabelSet::id(const std::string& name) const {
    int i = find(name);
    if (i < 0) throw ArgumentError("label not in set: " + name);
    return i;
}

const std::string& LabelSet::name(int id) const {
    if (id < 0 || std::size_t(id) >= names.size()) {
        throw ArgumentError("label id out of range: " + std::to_string(id));
    }
    return names[id];
}

namespace {

// Splits "B-PER" into prefix 'B' and type "PER"; a bare tag has empty type.
std::pair<char, std::string> split_tag(const std::string& name) {
    if (name.size() >= 2 && name[1] == '-') return {name[0], name.substr(2)};
    return {name.empty() ? '?' : name[0], name.size() == 1 ? "" : name};
}

bool valid_bio_name(const std::string& name) {
    if (name == "O") return true;
    return name.size() >= 3 && (name[0] == 'B' || name[0] == 'I') && name[1] == '-';
}

bool valid_bmes_name(const std::string& name) {
    if (name.size() == 1)
        return name[0] == 'B' || name[0] == 'M' || name[0] == 'E' || name[0] == 'S';
    return name.size() >= 3 && name[1] == '-' &&
           (name[0] == 'B' || name[0] == 'M' || name[0] == 'E' || name[0] == 'S');
}

}  // namespace

void LabelSet::validate() const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (std::size_t j = i + 1; j < names.size(); ++j) {
            if (names[i] == names[j]) throw ArgumentError("duplicate label: " + names[i]);
        }
    }
    if (scheme == LabelScheme::BIO) {
        for (const auto& n : names) {
            if (!valid_bio_name(n)) throw ArgumentError("not a BIO label: " + n);
        }
    } else if (scheme == LabelScheme::BMES) {
        for (const auto& n : names) {
            if (!valid_bmes_name(n)) throw ArgumentError("not a BMES label: " + n);
        }
    }
}

std::size_t Dataset::token_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.size();
    return n;
}

ParseResult parse_conll(std::string_view text, LabelScheme scheme) {
    ParseResult out;
    out.labels.scheme = scheme;
    std::unordered_map<std::string, int> label_ids;

    auto intern = [&](const std::string& name) {
        auto it = label_ids.find(name);
        if (it != label_ids.end()) return it->second;
        int id = int(out.labels.names.size());
        out.labels.names.push_back(name);
        label_ids.emplace(name, id);
        return id;
    };

    TokenSequence cur;
    std::size_t line_no = 0;
    std::size_t pos = 0;

    auto flush = [&] {
        if (cur.tokens.empty()) return;
        cur.id = std::uint32_t(out.data.sentences.size());
        out.data.sentences.push_back(std::move(cur));
        cur = TokenSequence{};
    };

    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line =
            eol == std::string_view::npos ? text.substr(pos) : text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;
        bool last = eol == std::string_view::npos;
        pos = last ? text.size() + 1 : eol + 1;

        if (line.empty()) {
            flush();
            if (last) break;
            continue;
        }
        std::istringstream ls{std::string(line)};
        std::string surface, label, extra;
        if (!(ls >> surface >> label) || (ls >> extra)) {
            throw ParseError("line " + std::to_string(line_no) + ": expected 2 columns");
        }
        if (scheme == LabelScheme::BIO && !valid_bio_name(label)) {
            throw ParseError("line " + std::to_string(line_no) + ": not a BIO label: " + label);
        }
        if (scheme == LabelScheme::BMES && !valid_bmes_name(label)) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": not a BMES label: " + label);
        }
        if (scheme == LabelScheme::BIO && label[0] == 'I') {
            // Orphan I-X is repaired to B-X, conlleval style.
            bool ok = false;
            if (!cur.labels.empty()) {
                const std::string& prev = out.labels.name(cur.labels.back());
                if (prev != "O" && split_tag(prev).second == split_tag(label).second) ok = true;
            }
            if (!ok) {
                label = "B-" + split_tag(label).second;
                ++out.repaired;
            }
        }
        cur.tokens.emplace_back(surface);
        cur.labels.push_back(intern(label));
        if (last) {
            flush();
            break;
        }
    }
    if (out.data.sentences.empty()) throw ParseError("empty dataset");
    return out;
}

std::string serialize(const Dataset& data, const LabelSet& labels) {
    std::string out;
    for (std::size_t s = 0; s < data.sentences.size(); ++s) {
        if (s > 0) out += '\n';
        const auto& sent = data.sentences[s];
        for (std::size_t i = 0; i < sent.size(); ++i) {
            out += sent.tokens[i];
            out += ' ';
            out += labels.name(sent.labels[i]);
            out += '\n';
        }
    }
    return out;
}

std::vector<Span> spans_from_labels(const std::vector<int>& labels, const LabelSet& set) {
    std::vector<Span> out;
    if (set.scheme == LabelScheme::PLAIN) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            out.push_back({i, i + 1, set.name(labels[i])});
        }
        return out;
    }
    if (set.scheme == LabelScheme::BIO) {
        std::size_t start = 0;
        std::string type;
        bool open = false;
        auto close = [&](std::size_t end) {
            if (open) out.push_back({start, end, type});
            open = false;
        };
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const std::string& name = set.name(labels[i]);
            if (name == "O") {
                close(i);
            } else if (name[0] == 'B') {
                close(i);
                open = true;
                start = i;
                type = split_tag(name).second;
            } else {  // I-X; parse repair guarantees continuation
                if (!open || split_tag(name).second != type) {
                    close(i);
                    open = true;
                    start = i;
                    type = split_tag(name).second;
                }
            }
        }
        close(labels.size());
        return out;
    }
    // BMES
    std::size_t start = 0;
    std::string type;
    bool open = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto [prefix, t] = split_tag(set.name(labels[i]));
        switch (prefix) {
            case 'S':
                out.push_back({i, i + 1, t});
                open = false;
                break;
            case 'B':
                open = true;
                start = i;
                type = t;
                break;
            case 'M':
                if (!open || t != type) {
                    open = true;
                    start = i;
                    type = t;
                }
                break;
            case 'E':
                if (open && t == type) {
                    out.push_back({start, i + 1, type});
                } else {
                    out.push_back({i, i + 1, t});
                }
                open = false;
                break;
            default: break;
        }
    }
    return out;
}

std::vector<int> labels_from_spans(const std::vector<Span>& spans, std::size_t n,
                                   const LabelSet& set) {
    if (set.scheme == LabelScheme::PLAIN) {
        std::vector<int> out(n, 0);
        for (const auto& sp : spans) {
            for (std::size_t i = sp.start; i < sp.end; ++i) out[i] = set.id(sp.type);
        }
        return out;
    }
    // "O" is looked up lazily: a fully covered sentence (e.g. BMES
    // segmentation) never needs it, and the label set may not define it.
    std::vector<int> out(n, -1);
    for (const auto& sp : spans) {
        if (set.scheme == LabelScheme::BIO) {
            out[sp.start] = set.id("B-" + sp.type);
            for (std::size_t i = sp.start + 1; i < sp.end; ++i) out[i] = set.id("I-" + sp.type);
        } else {
            if (sp.end - sp.start == 1) {
                out[sp.start] = set.id("S-" + sp.type);
            } else {
                out[sp.start] = set.id("B-" + sp.type);
                for (std::size_t i = sp.start + 1; i + 1 < sp.end; ++i)
                    out[i] = set.id("M-" + sp.type);
                out[sp.end - 1] = set.id("E-" + sp.type);
            }
        }
    }
    for (auto& l : out) {
        if (l < 0) l = set.id("O");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace {

struct Surface {
    std::vector<std::string> tokens;
    int type = 0;  // index into kTypes
};

const char* kTypes[3] = {"PER", "ORG", "LOC"};
const char* kSecond[3] = {"jr", "corp", "valley"};

// Templates with entity slots marked "@".
const std::vector<std::vector<std::string>> kTemplates = {
    {"the", "report", "about", "@", "was", "filed", "yesterday"},
    {"@", "appeared", "in", "the", "morning", "bulletin"},
    {"officials", "mentioned", "@", "during", "the", "briefing"},
    {"a", "story", "about", "@", "and", "@", "ran", "today"},
    {"sources", "close", "to", "@", "denied", "the", "claim"},
    {"@", "met", "@", "last", "week"},
    {"nothing", "new", "was", "said", "about", "@"},
    {"the", "feature", "on", "@", "drew", "wide", "attention"},
};

}  // namespace

SyntheticCorpus generate_synthetic(std::uint64_t seed, std::size_t n_sentences,
                                   double long_tail_fraction) {
    if (n_sentences < 10) throw ArgumentError("generate_synthetic: need n_sentences >= 10");
    if (!(long_tail_fraction >= 0.0 && long_tail_fraction <= 0.5)) {
        throw ArgumentError("generate_synthetic: long_tail_fraction must be in [0, 0.5]");
    }
    std::mt19937_64 rng(seed);

    SyntheticCorpus out;
    out.labels.scheme = LabelScheme::BIO;
    out.labels.names = {"O", "B-PER", "I-PER", "B-ORG", "I-ORG", "B-LOC", "I-LOC"};

    std::size_t n_train = n_sentences * 7 / 10;
    std::size_t n_dev = n_sentences * 15 / 100;
    std::size_t n_test = n_sentences - n_train - n_dev;

    // Average slots per sentence across the template pool.
    std::size_t slot_budget = 0;
    std::vector<std::size_t> tmpl_slots;
    for (const auto& t : kTemplates) {
        tmpl_slots.push_back(std::size_t(std::count(t.begin(), t.end(), "@")));
    }

    // Pre-draw train templates so the rare-slot schedule is known up front.
    std::uniform_int_distribution<std::size_t> tmpl_dist(0, kTemplates.size() - 1);
    std::vector<std::size_t> train_tmpl(n_train);
    for (auto& t : train_tmpl) {
        t = tmpl_dist(rng);
        slot_budget += tmpl_slots[t];
    }

    std::size_t total_surfaces = std::max<std::size_t>(6, slot_budget / 2);
    std::size_t n_rare = std::size_t(double(total_surfaces) * long_tail_fraction);

    std::vector<Surface> surfaces(total_surfaces);
    std::bernoulli_distribution two_token(0.2);
    for (std::size_t i = 0; i < total_surfaces; ++i) {
        int type = int(i % 3);
        std::string base;
        base += char('a' + type);
        base += "nt";
        base += std::to_string(i);
        surfaces[i].type = type;
        surfaces[i].tokens = {base};
        if (two_token(rng)) surfaces[i].tokens.push_back(kSecond[type]);
    }
    std::shuffle(surfaces.begin(), surfaces.end(), rng);

    // The first n_rare surfaces are long-tail: exactly one train occurrence,
    // recurring in dev (first third) or test (rest).
    std::vector<std::size_t> rare_dev, rare_test, common;
    for (std::size_t i = 0; i < total_surfaces; ++i) {
        if (i < n_rare) {
            (i % 3 == 0 ? rare_dev : rare_test).push_back(i);
        } else {
            common.push_back(i);
        }
    }
    if (common.empty()) common.push_back(total_surfaces - 1);

    // Assign each rare surface to one distinct train slot.
    std::vector<std::size_t> slot_fill(slot_budget, SIZE_MAX);
    {
        std::vector<std::size_t> order(slot_budget);
        for (std::size_t i = 0; i < slot_budget; ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t j = 0;
        for (std::size_t s : rare_dev) slot_fill[order[j++]] = s;
        for (std::size_t s : rare_test) slot_fill[order[j++]] = s;
    }

    auto pick = [&](const std::vector<std::size_t>& pool) {
        std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
        return pool[d(rng)];
    };

    auto emit = [&](Dataset& split, std::size_t tmpl_idx,
                    const std::vector<std::size_t>& slot_surfaces) {
        TokenSequence sent;
        sent.id = std::uint32_t(split.sentences.size());
        std::size_t slot = 0;
        for (const auto& word : kTemplates[tmpl_idx]) {
            if (word == "@") {
                const Surface& sf = surfaces[slot_surfaces[slot++]];
                for (std::size_t i = 0; i < sf.tokens.size(); ++i) {
                    sent.tokens.push_back(sf.tokens[i]);
                    std::string tag = (i == 0 ? "B-" : "I-") + std::string(kTypes[sf.type]);
                    sent.labels.push_back(out.labels.id(tag));
                }
            } else {
                sent.tokens.push_back(word);
                sent.labels.push_back(0);  // O
            }
        }
        split.sentences.push_back(std::move(sent));
    };

    std::size_t slot_cursor = 0;
    for (std::size_t s = 0; s < n_train; ++s) {
        std::vector<std::size_t> fills;
        for (std::size_t i = 0; i < tmpl_slots[train_tmpl[s]]; ++i) {
            std::size_t pre = slot_fill[slot_cursor++];
            fills.push_back(pre != SIZE_MAX ? pre : pick(common));
        }
        emit(out.train, train_tmpl[s], fills);
    }

    // Dev and test lean on long-tail recurrences (80%) so retrieval effects
    // are measurable there; the rest re-use common surfaces.
    std::bernoulli_distribution use_rare(0.8);
    auto emit_eval = [&](Dataset& split, std::size_t count,
                         const std::vector<std::size_t>& rare_pool) {
        for (std::size_t s = 0; s < count; ++s) {
            std::size_t t = tmpl_dist(rng);
            std::vector<std::size_t> fills;
            for (std::size_t i = 0; i < tmpl_slots[t]; ++i) {
                bool rare = !rare_pool.empty() && use_rare(rng);
                fills.push_back(pick(rare ? rare_pool : common));
            }
            emit(split, t, fills);
        }
    };
    emit_eval(out.dev, n_dev, rare_dev);
    emit_eval(out.test, n_test, rare_test);
    return out;
}

// ---------------------------------------------------------------------------
// Vocab
// ---------------------------------------------------------------------------

Vocab Vocab::build(const Dataset& data) {
    Vocab v;
    v.id_to_token_ = {"<s>", "<unk>"};
    v.token_to_id_ = {{"<s>", kBoundary}, {"<unk>", kUnk}};
    for (const auto& sent : data.sentences) {
        for (const auto& tok : sent.tokens) {
            if (v.token_to_id_.emplace(tok, int(v.id_to_token_.size())).second) {
                v.id_to_token_.push_back(tok);
            }
        }
    }
    return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < 2) throw ArgumentError("vocab: reserved entries missing");
    Vocab v;
    v.id_to_token_ = std::move(tokens);
    for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
        if (!v.token_to_id_.emplace(v.id_to_token_[i], int(i)).second) {
            throw ArgumentError("vocab: duplicate token " + v.id_to_token_[i]);
        }
    }
    return v;
}

int Vocab::id_or_unk(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || std::size_t(id) >= id_to_token_.size()) {
        throw ArgumentError("token id out of range: " + std::to_string(id));
    }
    return id_to_token_[id];
}

}  // namespace gnnsl::corpus
