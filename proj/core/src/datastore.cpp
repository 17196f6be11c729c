#include "gnnsl/datastore.hpp"

#include <algorithm>
#include <cmath>

#include "gnnsl/io.hpp"

namespace gnnsl::ds {

namespace {

std::uint64_t token_key(TokenRef ref) {
    return (std::uint64_t(ref.sentence_id) << 32) | ref.token_index;
}

}  // namespace

Datastore::Datastore(std::size_t d, std::vector<std::string> label_names,
                     Digest source_digest)
    : d_(d), label_names_(std::move(label_names)), source_digest_(source_digest) {}

void Datastore::add(Record r) {
    if (r.key.size() != d_) {
        throw FormatError("datastore: key width " + std::to_string(r.key.size()) +
                          " does not match store width " + std::to_string(d_));
    }
    TokenRef ref{r.sentence_id, r.token_index};
    if (!by_token_.emplace(token_key(ref), records_.size()).second) {
        throw FormatError("datastore: duplicate record for sentence " +
                          std::to_string(r.sentence_id) + " token " +
                          std::to_string(r.token_index));
    }
    auto& len = sentence_len_[r.sentence_id];
    len = std::max(len, std::size_t(r.token_index) + 1);
    records_.push_back(std::move(r));
}

std::optional<std::size_t> Datastore::find(TokenRef ref) const {
    auto it = by_token_.find(token_key(ref));
    if (it == by_token_.end()) return std::nullopt;
    return it->second;
}

std::size_t Datastore::sentence_length(std::uint32_t sentence_id) const {
    auto it = sentence_len_.find(sentence_id);
    return it == sentence_len_.end() ? 0 : it->second;
}

bool Datastore::operator==(const Datastore& other) const {
    if (d_ != other.d_ || label_names_ != other.label_names_ ||
        source_digest_ != other.source_digest_ || records_.size() != other.records_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const Record& a = records_[i];
        const Record& b = other.records_[i];
        if (a.label_id != b.label_id || a.sentence_id != b.sentence_id ||
            a.token_index != b.token_index || a.key != b.key) {
            return false;
        }
    }
    return true;
}

Datastore build(const enc::EncoderParameters& params, const corpus::Vocab& vocab,
                const corpus::Dataset& train, const corpus::LabelSet& labels) {
    num::NoGrad ng;
    Datastore store(params.cfg.d, labels.names, enc::checkpoint_digest(params));
    for (const auto& sent : train.sentences) {
        auto hs = enc::encode(params, vocab, sent);
        for (std::size_t i = 0; i < sent.size(); ++i) {
            Record r;
            r.key.reserve(params.cfg.d);
            for (double v : hs[i].value()) r.key.push_back(float(v));
            r.label_id = std::uint32_t(sent.labels[i]);
            r.sentence_id = sent.id;
            r.token_index = std::uint32_t(i);
            store.add(std::move(r));
        }
    }
    return store;
}

NeighborSet knn_query(const Datastore& store, const std::vector<double>& h, std::size_t k,
                      std::optional<TokenRef> exclude) {
    if (store.size() == 0) throw ArgumentError("knn_query: empty store");
    if (k < 1) throw ArgumentError("knn_query: k must be >= 1");
    if (h.size() != store.d()) {
        throw DimensionError("knn_query: query width " + std::to_string(h.size()) +
                             " does not match store width " + std::to_string(store.d()));
    }

    auto better = [&](const Neighbor& a, const Neighbor& b) {
        if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
        const Record& ra = store.record(a.record_index);
        const Record& rb = store.record(b.record_index);
        if (ra.sentence_id != rb.sentence_id) return ra.sentence_id < rb.sentence_id;
        return ra.token_index < rb.token_index;
    };

    // Bounded max-heap over the k best candidates.
    NeighborSet heap;
    heap.reserve(k + 1);
    auto worse_first = [&](const Neighbor& a, const Neighbor& b) { return better(a, b); };

    for (std::size_t i = 0; i < store.size(); ++i) {
        const Record& r = store.record(i);
        if (exclude && r.sentence_id == exclude->sentence_id &&
            r.token_index == exclude->token_index) {
            continue;
        }
        double d2 = 0.0;
        for (std::size_t j = 0; j < h.size(); ++j) {
            double diff = h[j] - double(r.key[j]);
            d2 += diff * diff;
        }
        Neighbor cand{i, d2};
        if (heap.size() < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end(), worse_first);
        } else if (better(cand, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), worse_first);
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end(), worse_first);
        }
    }
    std::sort(heap.begin(), heap.end(), better);
    return heap;
}

// Binary layout: magic "GSLD", version u32, d u32, count u64, label_count
// u32, labels (u16 len + bytes), digest 32 bytes, then records of
// {sentence_id u32, token_index u32, label_id u32, d x f32}, little-endian.
void save(const Datastore& store, const std::string& path) {
    std::string out = "GSLD";
    io::put_u32(out, 1);
    io::put_u32(out, std::uint32_t(store.d()));
    io::put_u64(out, store.size());
    io::put_u32(out, std::uint32_t(store.label_names().size()));
    for (const auto& name : store.label_names()) {
        io::put_u16(out, std::uint16_t(name.size()));
        out += name;
    }
    out.append(reinterpret_cast<const char*>(store.source_digest().data()), 32);
    for (const auto& r : store.records()) {
        io::put_u32(out, r.sentence_id);
        io::put_u32(out, r.token_index);
        io::put_u32(out, r.label_id);
        for (float v : r.key) io::put_f32(out, v);
    }
    io::write_file_atomic(path, out);
}

Datastore load(const std::string& path) {
    std::string bytes = io::read_file(path);
    io::Reader r(bytes, "datastore " + path);
    std::string magic = r.bytes(4);
    if (magic != "GSLD") throw FormatError("datastore " + path + ": bad magic '" + magic + "'");
    std::uint32_t version = r.u32();
    if (version != 1) {
        throw FormatError("datastore " + path + ": unsupported version " +
                          std::to_string(version));
    }
    std::uint32_t d = r.u32();
    std::uint64_t count = r.u64();
    std::uint32_t label_count = r.u32();
    std::vector<std::string> labels(label_count);
    for (auto& name : labels) name = r.bytes(r.u16());
    Digest digest;
    std::string dig_bytes = r.bytes(32);
    std::copy(dig_bytes.begin(), dig_bytes.end(), digest.begin());

    Datastore store(d, std::move(labels), digest);
    for (std::uint64_t i = 0; i < count; ++i) {
        Record rec;
        rec.sentence_id = r.u32();
        rec.token_index = r.u32();
        rec.label_id = r.u32();
        rec.key.resize(d);
        for (auto& v : rec.key) v = r.f32();
        store.add(std::move(rec));
    }
    if (!r.at_end()) {
        throw FormatError("datastore " + path + ": trailing bytes at offset " +
                          std::to_string(r.offset()));
    }
    return store;
}

}  // namespace gnnsl::ds
