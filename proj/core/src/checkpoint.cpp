#include "sparselab/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace sparselab {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    void bytes(const std::vector<std::uint8_t>& v) {
        u64(v.size());
        buf_.insert(buf_.end(), v.begin(), v.end());
    }
    void doubles(const std::vector<double>& v) {
        u64(v.size());
        for (auto x : v) f64(x);
    }
    void i64s(const std::vector<std::int64_t>& v) {
        u64(v.size());
        for (auto x : v) i64(x);
    }
    void mat(const std::vector<std::vector<double>>& m) {
        u64(m.size());
        for (const auto& v : m) doubles(v);
    }
    const std::vector<std::uint8_t>& data() const { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(std::vector<std::uint8_t> data, std::string path)
        : buf_(std::move(data)), path_(std::move(path)) {}

    std::uint8_t u8() {
        need(1);
        return buf_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf_[pos_++]) << (8 * i);
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const auto n = len();
        need(n);
        std::string s(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    std::vector<std::uint8_t> bytes() {
        const auto n = len();
        need(n);
        std::vector<std::uint8_t> v(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                    buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return v;
    }
    std::vector<double> doubles() {
        const auto n = len();
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    std::vector<std::int64_t> i64s() {
        const auto n = len();
        std::vector<std::int64_t> v(n);
        for (auto& x : v) x = i64();
        return v;
    }
    std::vector<std::vector<double>> mat() {
        const auto n = len();
        std::vector<std::vector<double>> m(n);
        for (auto& v : m) v = doubles();
        return m;
    }
    void expect_end() const {
        if (pos_ != buf_.size()) {
            throw std::runtime_error("checkpoint " + path_ + ": " +
                                     std::to_string(buf_.size() - pos_) +
                                     " trailing bytes at offset " + std::to_string(pos_));
        }
    }

private:
    std::size_t len() {
        const auto n = u64();
        if (n > buf_.size()) {
            throw std::runtime_error("checkpoint " + path_ + ": length " + std::to_string(n) +
                                     " at offset " + std::to_string(pos_ - 8) + " exceeds file size");
        }
        return static_cast<std::size_t>(n);
    }
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) {
            throw std::runtime_error("checkpoint " + path_ + ": truncated at offset " +
                                     std::to_string(pos_) + ", needed " + std::to_string(n) +
                                     " more bytes");
        }
    }
    std::vector<std::uint8_t> buf_;
    std::string path_;
    std::size_t pos_ = 0;
};

void write_record(ByteWriter& w, const RunRecord& r) {
    w.str(r.algorithm);
    w.u64(r.seed);
    w.i64(r.epochs);
    w.i64(r.steps_per_epoch);
    w.i64(r.batch_size);
    w.doubles(r.step_loss);
    w.u64(r.metrics.size());
    for (const auto& m : r.metrics) {
        w.i64(m.step);
        w.i64(m.epoch);
        w.str(m.split);
        w.str(m.metric);
        w.f64(m.value);
    }
    w.u64(r.events.size());
    for (const auto& ev : r.events) {
        w.i64(ev.step);
        w.u8(ev.scope == PruneScope::global ? 0 : 1);
        w.f64(ev.target_sparsity);
        w.f64(ev.achieved_sparsity);
        w.f64(ev.regen_ratio);
        w.u8(ev.used_dense_gradient ? 1 : 0);
        w.u64(ev.layers.size());
        for (const auto& le : ev.layers) {
            w.str(le.layer_id);
            w.i64(le.schedule_pruned);
            w.i64(le.removed);
            w.i64(le.regenerated);
            w.i64(le.nnz);
            w.i64(le.numel);
            w.u8(le.clamped ? 1 : 0);
        }
    }
    w.u64(r.layer_ids.size());
    for (const auto& id : r.layer_ids) w.str(id);
    w.i64s(r.layer_numel);
    w.i64s(r.initial_nnz);
    w.i64s(r.final_nnz);
    w.mat(r.initial_weights);
    w.mat(r.initial_biases);
    w.mat(r.final_weights);
    w.mat(r.final_biases);
    w.u64(r.final_masks.size());
    for (const auto& m : r.final_masks) w.bytes(m);
    w.f64(r.final_train_accuracy);
    w.f64(r.final_test_accuracy);
    w.u64(r.final_mask_digest);
    w.u64(r.final_weight_digest);
    w.u8(r.aborted ? 1 : 0);
    w.str(r.abort_reason);
}

RunRecord read_record(ByteReader& rd) {
    RunRecord r;
    r.algorithm = rd.str();
    r.seed = rd.u64();
    r.epochs = rd.i64();
    r.steps_per_epoch = rd.i64();
    r.batch_size = rd.i64();
    r.step_loss = rd.doubles();
    r.metrics.resize(rd.u64());
    for (auto& m : r.metrics) {
        m.step = rd.i64();
        m.epoch = rd.i64();
        m.split = rd.str();
        m.metric = rd.str();
        m.value = rd.f64();
    }
    r.events.resize(rd.u64());
    for (auto& ev : r.events) {
        ev.step = rd.i64();
        ev.scope = rd.u8() == 0 ? PruneScope::global : PruneScope::uniform;
        ev.target_sparsity = rd.f64();
        ev.achieved_sparsity = rd.f64();
        ev.regen_ratio = rd.f64();
        ev.used_dense_gradient = rd.u8() != 0;
        ev.layers.resize(rd.u64());
        for (auto& le : ev.layers) {
            le.layer_id = rd.str();
            le.schedule_pruned = rd.i64();
            le.removed = rd.i64();
            le.regenerated = rd.i64();
            le.nnz = rd.i64();
            le.numel = rd.i64();
            le.clamped = rd.u8() != 0;
        }
    }
    r.layer_ids.resize(rd.u64());
    for (auto& id : r.layer_ids) id = rd.str();
    r.layer_numel = rd.i64s();
    r.initial_nnz = rd.i64s();
    r.final_nnz = rd.i64s();
    r.initial_weights = rd.mat();
    r.initial_biases = rd.mat();
    r.final_weights = rd.mat();
    r.final_biases = rd.mat();
    r.final_masks.resize(rd.u64());
    for (auto& m : r.final_masks) m = rd.bytes();
    r.final_train_accuracy = rd.f64();
    r.final_test_accuracy = rd.f64();
    r.final_mask_digest = rd.u64();
    r.final_weight_digest = rd.u64();
    r.aborted = rd.u8() != 0;
    r.abort_reason = rd.str();
    return r;
}

}  // namespace

Checkpoint capture_checkpoint(const Network& net, const SgdState& opt, const RngStreams& rng,
                              const RunRecord& record, std::int64_t next_epoch,
                              std::int64_t next_step) {
    Checkpoint ck;
    ck.root_seed = rng.root_seed();
    ck.next_epoch = next_epoch;
    ck.next_step = next_step;
    ck.rng_states = rng.snapshot();
    for (const auto& p : net.params) {
        ck.weights.push_back(p.weight.data);
        ck.masks.push_back(p.mask);
        ck.prunable_flags.push_back(p.prunable ? 1 : 0);
        ck.stash.push_back(p.stash);
    }
    for (const auto& b : net.biases) ck.biases.push_back(b.data);
    ck.weight_velocity = opt.weight_velocity;
    ck.bias_velocity = opt.bias_velocity;
    ck.record = record;
    return ck;
}

void restore_checkpoint(const Checkpoint& ck, Network& net, SgdState& opt, RngStreams& rng) {
    if (ck.weights.size() != net.params.size() || ck.biases.size() != net.biases.size()) {
        throw std::invalid_argument("checkpoint does not match this network's layer count");
    }
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        auto& p = net.params[i];
        if (ck.weights[i].size() != p.weight.data.size() || ck.masks[i].size() != p.mask.size()) {
            throw std::invalid_argument("checkpoint size mismatch at " + p.layer_id);
        }
        p.weight.data = ck.weights[i];
        p.mask = ck.masks[i];
        p.prunable = ck.prunable_flags[i] != 0;
        p.stash = ck.stash[i];
    }
    for (std::size_t i = 0; i < net.biases.size(); ++i) {
        if (ck.biases[i].size() != net.biases[i].data.size()) {
            throw std::invalid_argument("checkpoint bias size mismatch");
        }
        net.biases[i].data = ck.biases[i];
    }
    opt.weight_velocity = ck.weight_velocity;
    opt.bias_velocity = ck.bias_velocity;
    rng.restore(ck.root_seed, ck.rng_states);
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    ByteWriter w;
    for (auto c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kVersion);
    w.u64(ck.root_seed);
    w.i64(ck.next_epoch);
    w.i64(ck.next_step);
    w.u64(ck.rng_states.size());
    for (const auto& e : ck.rng_states) {
        w.str(e.name);
        w.u64(e.state);
    }
    w.mat(ck.weights);
    w.u64(ck.masks.size());
    for (const auto& m : ck.masks) w.bytes(m);
    w.bytes(ck.prunable_flags);
    w.mat(ck.stash);
    w.mat(ck.biases);
    w.mat(ck.weight_velocity);
    w.mat(ck.bias_velocity);
    write_record(w, ck.record);

    const auto tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
        out.write(reinterpret_cast<const char*>(w.data().data()),
                  static_cast<std::streamsize>(w.data().size()));
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("cannot move " + tmp + " into place at " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) throw std::runtime_error("short read from checkpoint " + path);

    ByteReader rd(std::move(bytes), path);
    for (auto c : kMagic) {
        if (rd.u8() != static_cast<std::uint8_t>(c)) {
            throw std::runtime_error("checkpoint " + path + ": bad magic, not a checkpoint file");
        }
    }
    const auto version = rd.u32();
    if (version != kVersion) {
        throw std::runtime_error("checkpoint " + path + ": unsupported version " +
                                 std::to_string(version));
    }
    Checkpoint ck;
    ck.root_seed = rd.u64();
    ck.next_epoch = rd.i64();
    ck.next_step = rd.i64();
    ck.rng_states.resize(rd.u64());
    for (auto& e : ck.rng_states) {
        e.name = rd.str();
        e.state = rd.u64();
    }
    ck.weights = rd.mat();
    ck.masks.resize(rd.u64());
    for (auto& m : ck.masks) m = rd.bytes();
    ck.prunable_flags = rd.bytes();
    ck.stash = rd.mat();
    ck.biases = rd.mat();
    ck.weight_velocity = rd.mat();
    ck.bias_velocity = rd.mat();
    ck.record = read_record(rd);
    rd.expect_end();
    return ck;
}

}  // namespace sparselab
