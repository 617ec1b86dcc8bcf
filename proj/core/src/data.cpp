#include "sparselab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sparselab {

namespace {

std::string hex_byte(unsigned b) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "0x%02x", b & 0xffu);
    return buf;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) throw std::runtime_error("short read from " + path);
    return bytes;
}

[[noreturn]] void idx_error(const std::string& path, std::size_t offset, const std::string& what) {
    throw std::runtime_error("idx parse error in " + path + " at byte " + std::to_string(offset) +
                             ": " + what);
}

// read_idx scales u8 to [0, 1]; label files carry raw class bytes.
std::int64_t round_to_label(double v) { return std::llround(v * 255.0); }

}  // namespace

Shape Dataset::sample_shape() const {
    if (inputs.shape.empty()) return {};
    return Shape(inputs.shape.begin() + 1, inputs.shape.end());
}

void Dataset::validate() const {
    if (class_count < 1) throw std::invalid_argument("dataset: class_count must be >= 1");
    if (static_cast<std::int64_t>(labels.size()) != size()) {
        throw std::invalid_argument("dataset: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(size()) + " inputs");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= class_count) {
            throw std::invalid_argument("dataset: label " + std::to_string(labels[i]) +
                                        " out of range at row " + std::to_string(i));
        }
    }
}

void Dataset::gather(const std::vector<std::int64_t>& rows, Tensor& x_out,
                     std::vector<std::int64_t>& y_out) const {
    const auto sample = sample_shape();
    const auto ssz = shape_numel(sample);
    Shape out_shape;
    out_shape.push_back(static_cast<std::int64_t>(rows.size()));
    out_shape.insert(out_shape.end(), sample.begin(), sample.end());
    if (x_out.shape != out_shape) x_out = Tensor(out_shape);
    y_out.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = rows[i];
        if (r < 0 || r >= size()) {
            throw std::out_of_range("dataset gather: row " + std::to_string(r) + " of " +
                                    std::to_string(size()));
        }
        std::copy_n(inputs.data.begin() + r * ssz, ssz,
                    x_out.data.begin() + static_cast<std::int64_t>(i) * ssz);
        y_out[i] = labels[static_cast<std::size_t>(r)];
    }
}

Tensor read_idx(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 4) idx_error(path, bytes.size(), "header truncated, need at least 4 bytes");
    if (bytes[0] != 0 || bytes[1] != 0) {
        idx_error(path, 0, "magic bytes are " + hex_byte(bytes[0]) + " " + hex_byte(bytes[1]) +
                               ", expected 0x00 0x00");
    }
    if (bytes[2] != 0x08) {
        idx_error(path, 2, "unsupported type byte " + hex_byte(bytes[2]) + ", only u8 (0x08)");
    }
    const std::size_t ndim = bytes[3];
    if (ndim == 0) idx_error(path, 3, "zero dimensions");
    const std::size_t header = 4 + 4 * ndim;
    if (bytes.size() < header) {
        idx_error(path, bytes.size(), "truncated dimension table, header needs " +
                                          std::to_string(header) + " bytes");
    }
    Shape dims(ndim);
    std::size_t count = 1;
    for (std::size_t d = 0; d < ndim; ++d) {
        const std::size_t o = 4 + 4 * d;
        const std::uint32_t v = (std::uint32_t(bytes[o]) << 24) | (std::uint32_t(bytes[o + 1]) << 16) |
                                (std::uint32_t(bytes[o + 2]) << 8) | std::uint32_t(bytes[o + 3]);
        dims[d] = static_cast<std::int64_t>(v);
        count *= v;
    }
    if (bytes.size() != header + count) {
        idx_error(path, std::min(bytes.size(), header + count),
                  "payload has " + std::to_string(bytes.size() - header) + " bytes, dims declare " +
                      std::to_string(count));
    }
    Tensor t(dims);
    for (std::size_t i = 0; i < count; ++i) {
        t.data[i] = static_cast<double>(bytes[header + i]) / 255.0;
    }
    return t;
}

void write_idx_u8(const std::string& path, const Shape& dims,
                  const std::vector<std::uint8_t>& bytes) {
    if (static_cast<std::int64_t>(bytes.size()) != shape_numel(dims)) {
        throw std::invalid_argument("write_idx_u8: " + std::to_string(bytes.size()) +
                                    " bytes for shape " + shape_str(dims));
    }
    if (dims.empty() || dims.size() > 255) throw std::invalid_argument("write_idx_u8: bad rank");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    const std::uint8_t head[4] = {0, 0, 0x08, static_cast<std::uint8_t>(dims.size())};
    out.write(reinterpret_cast<const char*>(head), 4);
    for (auto d : dims) {
        if (d < 0 || d > 0xffffffffLL) throw std::invalid_argument("write_idx_u8: dim out of range");
        const auto v = static_cast<std::uint32_t>(d);
        const std::uint8_t be[4] = {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                                    static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
        out.write(reinterpret_cast<const char*>(be), 4);
    }
    if (!bytes.empty()) {
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path,
                      std::int64_t class_count) {
    Dataset ds;
    ds.inputs = read_idx(images_path);
    Tensor lab = read_idx(labels_path);
    if (lab.shape.size() != 1) {
        throw std::runtime_error("label file " + labels_path + " must be rank 1, got " +
                                 shape_str(lab.shape));
    }
    ds.labels.resize(lab.data.size());
    for (std::size_t i = 0; i < lab.data.size(); ++i) {
        ds.labels[i] = round_to_label(lab.data[i]);
    }
    ds.class_count = class_count;
    ds.validate();
    return ds;
}

Dataset read_cifar10_bin(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    constexpr std::size_t record = 3073;
    if (bytes.empty() || bytes.size() % record != 0) {
        throw std::runtime_error("cifar10 file " + path + " has " + std::to_string(bytes.size()) +
                                 " bytes, not a multiple of " + std::to_string(record));
    }
    const auto n = static_cast<std::int64_t>(bytes.size() / record);
    Dataset ds;
    ds.inputs = Tensor({n, 3, 32, 32});
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.class_count = 10;
    for (std::int64_t s = 0; s < n; ++s) {
        const auto* rec = bytes.data() + static_cast<std::size_t>(s) * record;
        ds.labels[static_cast<std::size_t>(s)] = rec[0];
        double* dst = ds.inputs.data.data() + s * 3072;
        for (std::size_t i = 0; i < 3072; ++i) dst[i] = static_cast<double>(rec[1 + i]) / 255.0;
    }
    ds.validate();
    return ds;
}

namespace {

// Seven-segment stroke table; segments are t, tl, tr, m, bl, br, b.
constexpr std::uint8_t kDigitSegments[10] = {
    0b1110111, 0b0010010, 0b1011101, 0b1011011, 0b0111010,
    0b1101011, 0b1101111, 0b1010010, 0b1111111, 0b1111011,
};

void render_digit(std::int64_t digit, std::int64_t dx, std::int64_t dy, double* img) {
    const auto seg = kDigitSegments[digit];
    const std::int64_t x0 = 8, x1 = 20, y_top = 5, y_mid = 14, y_bot = 23;
    auto hline = [&](std::int64_t y) {
        for (std::int64_t t = 0; t < 2; ++t) {
            for (std::int64_t x = x0; x <= x1; ++x) {
                const auto yy = y + t + dy, xx = x + dx;
                if (yy >= 0 && yy < 28 && xx >= 0 && xx < 28) img[yy * 28 + xx] = 1.0;
            }
        }
    };
    auto vline = [&](std::int64_t x, std::int64_t ya, std::int64_t yb) {
        for (std::int64_t t = 0; t < 2; ++t) {
            for (std::int64_t y = ya; y <= yb; ++y) {
                const auto yy = y + dy, xx = x + t + dx;
                if (yy >= 0 && yy < 28 && xx >= 0 && xx < 28) img[yy * 28 + xx] = 1.0;
            }
        }
    };
    if (seg & 0b1000000) hline(y_top);
    if (seg & 0b0100000) vline(x0, y_top, y_mid);
    if (seg & 0b0010000) vline(x1, y_top, y_mid);
    if (seg & 0b0001000) hline(y_mid);
    if (seg & 0b0000100) vline(x0, y_mid, y_bot);
    if (seg & 0b0000010) vline(x1, y_mid, y_bot);
    if (seg & 0b0000001) hline(y_bot);
}

}  // namespace

Dataset make_synthetic(const std::string& kind, std::int64_t n, double noise, std::uint64_t seed) {
    if (noise < 0.0) throw std::invalid_argument("make_synthetic: negative noise");
    Rng rng(derive_stream_seed(seed, "synthetic." + kind));
    Dataset ds;
    ds.tag = kind;

    if (kind == "blobs") {
        ds.class_count = 4;
        if (n < ds.class_count) throw std::invalid_argument("make_synthetic: n below class count");
        static const double centers[4][2] = {{2, 2}, {-2, 2}, {-2, -2}, {2, -2}};
        ds.inputs = Tensor({n, 2});
        ds.labels.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            const auto k = i % 4;
            ds.labels[static_cast<std::size_t>(i)] = k;
            ds.inputs.data[static_cast<std::size_t>(2 * i)] = centers[k][0] + noise * rng.next_normal();
            ds.inputs.data[static_cast<std::size_t>(2 * i + 1)] = centers[k][1] + noise * rng.next_normal();
        }
    } else if (kind == "two_moons") {
        ds.class_count = 2;
        if (n < ds.class_count) throw std::invalid_argument("make_synthetic: n below class count");
        ds.inputs = Tensor({n, 2});
        ds.labels.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            const auto k = i % 2;
            const double theta = M_PI * rng.next_double();
            double x, y;
            if (k == 0) {
                x = std::cos(theta);
                y = std::sin(theta);
            } else {
                x = 1.0 - std::cos(theta);
                y = 0.5 - std::sin(theta);
            }
            ds.labels[static_cast<std::size_t>(i)] = k;
            ds.inputs.data[static_cast<std::size_t>(2 * i)] = x + noise * rng.next_normal();
            ds.inputs.data[static_cast<std::size_t>(2 * i + 1)] = y + noise * rng.next_normal();
        }
    } else if (kind == "spirals") {
        ds.class_count = 3;
        if (n < ds.class_count) throw std::invalid_argument("make_synthetic: n below class count");
        ds.inputs = Tensor({n, 2});
        ds.labels.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            const auto k = i % 3;
            const double t = rng.next_double();
            const double r = 0.1 + 0.9 * t;
            const double theta = 2.5 * M_PI * t + 2.0 * M_PI * static_cast<double>(k) / 3.0;
            ds.labels[static_cast<std::size_t>(i)] = k;
            ds.inputs.data[static_cast<std::size_t>(2 * i)] = r * std::cos(theta) + noise * rng.next_normal();
            ds.inputs.data[static_cast<std::size_t>(2 * i + 1)] = r * std::sin(theta) + noise * rng.next_normal();
        }
    } else if (kind == "digits") {
        ds.class_count = 10;
        if (n < ds.class_count) throw std::invalid_argument("make_synthetic: n below class count");
        ds.inputs = Tensor({n, 28, 28});
        ds.labels.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            const auto k = i % 10;
            const auto dx = static_cast<std::int64_t>(rng.next_below(7)) - 3;
            const auto dy = static_cast<std::int64_t>(rng.next_below(7)) - 3;
            double* img = ds.inputs.data.data() + i * 784;
            render_digit(k, dx, dy, img);
            if (noise > 0.0) {
                for (std::int64_t p = 0; p < 784; ++p) {
                    img[p] = std::clamp(img[p] + noise * rng.next_normal(), 0.0, 1.0);
                }
            }
            ds.labels[static_cast<std::size_t>(i)] = k;
        }
    } else {
        throw std::invalid_argument("make_synthetic: unknown kind '" + kind +
                                    "' (blobs, two_moons, spirals, digits)");
    }
    ds.validate();
    return ds;
}

std::vector<Dataset> split_shuffle(const Dataset& ds, const std::vector<double>& fractions,
                                   std::uint64_t seed) {
    if (fractions.empty()) throw std::invalid_argument("split_shuffle: no fractions");
    double sum = 0.0;
    for (auto f : fractions) {
        if (f < 0.0) throw std::invalid_argument("split_shuffle: negative fraction");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("split_shuffle: fractions sum to " + std::to_string(sum) +
                                    ", expected 1");
    }
    Rng rng(derive_stream_seed(seed, "split"));
    const auto order = shuffled_indices(static_cast<std::size_t>(ds.size()), rng);

    const auto n = ds.size();
    std::vector<std::int64_t> counts(fractions.size());
    std::int64_t used = 0;
    for (std::size_t i = 0; i + 1 < fractions.size(); ++i) {
        counts[i] = static_cast<std::int64_t>(std::floor(fractions[i] * static_cast<double>(n)));
        used += counts[i];
    }
    counts.back() = n - used;

    std::vector<Dataset> out;
    std::size_t cursor = 0;
    for (std::size_t part = 0; part < counts.size(); ++part) {
        Dataset d;
        d.class_count = ds.class_count;
        d.tag = ds.tag + "/" + std::to_string(part);
        std::vector<std::int64_t> rows;
        rows.reserve(static_cast<std::size_t>(counts[part]));
        for (std::int64_t i = 0; i < counts[part]; ++i) {
            rows.push_back(static_cast<std::int64_t>(order[cursor++]));
        }
        ds.gather(rows, d.inputs, d.labels);
        out.push_back(std::move(d));
    }
    return out;
}

namespace {

// Channel layout used by normalization: index range and stride per sample.
std::int64_t channel_count(const Dataset& ds) {
    const auto rank = ds.inputs.shape.size();
    if (rank >= 4) return ds.inputs.shape[1];
    if (rank == 3) return 1;
    if (rank == 2) return ds.inputs.shape[1];
    throw std::invalid_argument("normalization: unsupported input rank " + std::to_string(rank));
}

}  // namespace

NormStats compute_norm_stats(const Dataset& ds) {
    const auto chans = channel_count(ds);
    const auto rank = ds.inputs.shape.size();
    NormStats st;
    st.mean.assign(static_cast<std::size_t>(chans), 0.0);
    st.stddev.assign(static_cast<std::size_t>(chans), 0.0);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(chans), 0);
    const auto ssz = shape_numel(ds.sample_shape());
    const auto per_chan = ssz / chans;
    for (std::int64_t s = 0; s < ds.size(); ++s) {
        const double* x = ds.inputs.data.data() + s * ssz;
        for (std::int64_t c = 0; c < chans; ++c) {
            const auto base = rank == 2 ? c : c * per_chan;
            const auto span = rank == 2 ? 1 : per_chan;
            for (std::int64_t i = 0; i < span; ++i) {
                st.mean[static_cast<std::size_t>(c)] += x[base + i];
                ++counts[static_cast<std::size_t>(c)];
            }
        }
    }
    for (std::int64_t c = 0; c < chans; ++c) {
        st.mean[static_cast<std::size_t>(c)] /= static_cast<double>(std::max<std::int64_t>(counts[static_cast<std::size_t>(c)], 1));
    }
    for (std::int64_t s = 0; s < ds.size(); ++s) {
        const double* x = ds.inputs.data.data() + s * ssz;
        for (std::int64_t c = 0; c < chans; ++c) {
            const auto base = rank == 2 ? c : c * per_chan;
            const auto span = rank == 2 ? 1 : per_chan;
            for (std::int64_t i = 0; i < span; ++i) {
                const double d = x[base + i] - st.mean[static_cast<std::size_t>(c)];
                st.stddev[static_cast<std::size_t>(c)] += d * d;
            }
        }
    }
    for (std::int64_t c = 0; c < chans; ++c) {
        auto& sd = st.stddev[static_cast<std::size_t>(c)];
        sd = std::sqrt(sd / static_cast<double>(std::max<std::int64_t>(counts[static_cast<std::size_t>(c)], 1)));
        if (sd == 0.0) sd = 1.0;
    }
    return st;
}

void apply_normalization(Dataset& ds, const NormStats& stats) {
    const auto chans = channel_count(ds);
    if (static_cast<std::int64_t>(stats.mean.size()) != chans ||
        static_cast<std::int64_t>(stats.stddev.size()) != chans) {
        throw std::invalid_argument("normalization: stats have " + std::to_string(stats.mean.size()) +
                                    " channels, dataset has " + std::to_string(chans));
    }
    const auto rank = ds.inputs.shape.size();
    const auto ssz = shape_numel(ds.sample_shape());
    const auto per_chan = ssz / chans;
    for (std::int64_t s = 0; s < ds.size(); ++s) {
        double* x = ds.inputs.data.data() + s * ssz;
        for (std::int64_t c = 0; c < chans; ++c) {
            const auto base = rank == 2 ? c : c * per_chan;
            const auto span = rank == 2 ? 1 : per_chan;
            for (std::int64_t i = 0; i < span; ++i) {
                x[base + i] = (x[base + i] - stats.mean[static_cast<std::size_t>(c)]) /
                              stats.stddev[static_cast<std::size_t>(c)];
            }
        }
    }
}

Dataset reshape_inputs(const Dataset& ds, const Shape& sample) {
    const auto old_sz = shape_numel(ds.sample_shape());
    if (shape_numel(sample) != old_sz) {
        throw std::invalid_argument("reshape_inputs: sample " + shape_str(sample) + " has " +
                                    std::to_string(shape_numel(sample)) + " elements, dataset samples have " +
                                    std::to_string(old_sz));
    }
    Dataset out = ds;
    Shape s;
    s.push_back(ds.size());
    s.insert(s.end(), sample.begin(), sample.end());
    out.inputs.shape = s;
    return out;
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    const auto ssz = shape_numel(ds.sample_shape());
    for (std::int64_t f = 0; f < ssz; ++f) out << "x" << f << ",";
    out << "label\n";
    out.precision(17);
    for (std::int64_t s = 0; s < ds.size(); ++s) {
        const double* x = ds.inputs.data.data() + s * ssz;
        for (std::int64_t f = 0; f < ssz; ++f) out << x[f] << ",";
        out << ds.labels[static_cast<std::size_t>(s)] << "\n";
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace sparselab
