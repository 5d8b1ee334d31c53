#include "oodseg/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "oodseg/errors.hpp"

namespace oodseg::io {

namespace {

using diffmath::Tensor;

std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(ParseErrorKind::io, path.string(), "cannot open for reading");
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spill(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError(ParseErrorKind::io, path.string(), "cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ParseError(ParseErrorKind::io, path.string(), "write failed");
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
public:
    Reader(const std::vector<char>& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path.string()) {}

    void expect_magic(std::string_view magic) {
        if (bytes_.size() < magic.size() || std::memcmp(bytes_.data(), magic.data(), magic.size()) != 0) {
            // A short file that is a prefix of the magic is still a magic error.
            throw ParseError(ParseErrorKind::bad_magic, path_, "expected magic \"" + printable(magic) + "\"");
        }
        pos_ = magic.size();
    }

    std::uint64_t unsigned_le(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }

    std::uint8_t byte() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw ParseError(ParseErrorKind::truncated, path_,
                             "truncated at byte " + std::to_string(bytes_.size()) + ", needed " +
                                 std::to_string(pos_ + n));
        }
    }

    void expect_end() const {
        if (pos_ != bytes_.size()) {
            throw ParseError(ParseErrorKind::trailing_data, path_,
                             std::to_string(bytes_.size() - pos_) + " unexpected trailing bytes");
        }
    }

    const std::string& path() const { return path_; }

private:
    static std::string printable(std::string_view s) {
        std::string out;
        for (char c : s) out += c == '\n' ? std::string("\\n") : std::string(1, c);
        return out;
    }

    const std::vector<char>& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

std::pair<std::size_t, std::size_t> read_dims(Reader& r) {
    const auto h = static_cast<std::size_t>(r.unsigned_le(4));
    const auto w = static_cast<std::size_t>(r.unsigned_le(4));
    if (h == 0 || w == 0) throw ParseError(ParseErrorKind::invalid_value, r.path(), "zero dimension");
    return {h, w};
}

void check_dims_fit(std::size_t h, std::size_t w, const std::filesystem::path& path) {
    constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
    if (h > kMax || w > kMax) throw ParseError(ParseErrorKind::invalid_value, path.string(), "dimensions exceed u32");
}

std::string header(std::string_view magic, std::size_t h, std::size_t w) {
    std::string out(magic);
    put_u32(out, static_cast<std::uint32_t>(h));
    put_u32(out, static_cast<std::uint32_t>(w));
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_field(std::string_view field, const std::string& path, std::size_t line) {
    const std::string f = trim(field);
    T value{};
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
    if (ec != std::errc() || ptr != f.data() + f.size() || f.empty()) {
        throw ParseError(ParseErrorKind::invalid_value, path,
                         "line " + std::to_string(line) + ": cannot parse field \"" + f + "\"");
    }
    return value;
}

std::string shortest(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

ScoreMap read_scoremap(const std::filesystem::path& path) {
    const std::vector<char> bytes = slurp(path);
    Reader r(bytes, path);
    r.expect_magic(kScoreMapMagic);
    const auto [h, w] = read_dims(r);
    r.need(h * w * 4);
    std::vector<double> scores(h * w);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const float f = std::bit_cast<float>(static_cast<std::uint32_t>(r.unsigned_le(4)));
        if (!std::isfinite(f)) {
            throw ParseError(ParseErrorKind::non_finite, path.string(), "non-finite score at pixel " + std::to_string(i));
        }
        scores[i] = static_cast<double>(f);
    }
    r.expect_end();
    return ScoreMap(h, w, std::move(scores));
}

void write_scoremap(const ScoreMap& map, const std::filesystem::path& path) {
    check_dims_fit(map.height(), map.width(), path);
    std::string out = header(kScoreMapMagic, map.height(), map.width());
    out.reserve(out.size() + map.size() * 4);
    for (std::size_t i = 0; i < map.size(); ++i) {
        const float f = static_cast<float>(map[i]);
        if (!std::isfinite(f)) {
            throw ParseError(ParseErrorKind::non_finite, path.string(),
                             "score at pixel " + std::to_string(i) + " overflows float32");
        }
        put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    spill(path, out);
}

BinaryMask read_mask(const std::filesystem::path& path) {
    const std::vector<char> bytes = slurp(path);
    Reader r(bytes, path);
    r.expect_magic(kMaskMagic);
    const auto [h, w] = read_dims(r);
    r.need(h * w);
    std::vector<std::uint8_t> labels(h * w);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i] = r.byte();
        if (labels[i] > 1) {
            throw ParseError(ParseErrorKind::invalid_value, path.string(),
                             "label " + std::to_string(labels[i]) + " at pixel " + std::to_string(i) + " is not binary");
        }
    }
    r.expect_end();
    return BinaryMask(h, w, std::move(labels));
}

void write_mask(const BinaryMask& mask, const std::filesystem::path& path) {
    check_dims_fit(mask.height(), mask.width(), path);
    std::string out = header(kMaskMagic, mask.height(), mask.width());
    for (std::uint8_t v : mask.labels()) out.push_back(static_cast<char>(v));
    spill(path, out);
}

BoxSet read_boxes(const std::filesystem::path& path) {
    const std::vector<char> bytes = slurp(path);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::vector<Box> boxes;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (fields.size() != 5) {
            throw ParseError(ParseErrorKind::invalid_value, path.string(),
                             "line " + std::to_string(lineno) + ": expected 5 fields, got " +
                                 std::to_string(fields.size()));
        }
        Box b;
        b.x0 = parse_field<int>(fields[0], path.string(), lineno);
        b.y0 = parse_field<int>(fields[1], path.string(), lineno);
        b.x1 = parse_field<int>(fields[2], path.string(), lineno);
        b.y1 = parse_field<int>(fields[3], path.string(), lineno);
        b.confidence = parse_field<double>(fields[4], path.string(), lineno);
        boxes.push_back(b);
    }
    try {
        return BoxSet(std::move(boxes));
    } catch (const ValidationError& e) {
        throw ParseError(ParseErrorKind::invalid_value, path.string(), e.what());
    }
}

void write_boxes(const BoxSet& boxes, const std::filesystem::path& path) {
    std::string out;
    for (const Box& b : boxes.boxes()) {
        out += std::to_string(b.x0) + "," + std::to_string(b.y0) + "," + std::to_string(b.x1) + "," +
               std::to_string(b.y1) + "," + shortest(b.confidence) + "\n";
    }
    spill(path, out);
}

void write_parameters(std::string_view magic, const std::vector<Tensor>& params, const std::filesystem::path& path) {
    std::uint64_t count = 0;
    for (const Tensor& t : params) count += t.size();
    std::string out(magic);
    put_u64(out, count);
    for (const Tensor& t : params) {
        for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    spill(path, out);
}

std::vector<Tensor> read_parameters(std::string_view magic, const std::vector<Tensor>& layout,
                                    const std::filesystem::path& path) {
    const std::vector<char> bytes = slurp(path);
    Reader r(bytes, path);
    r.expect_magic(magic);
    const std::uint64_t count = r.unsigned_le(8);
    std::uint64_t expected = 0;
    for (const Tensor& t : layout) expected += t.size();
    if (count != expected) {
        throw ParseError(ParseErrorKind::invalid_value, path.string(),
                         "file holds " + std::to_string(count) + " parameters, model needs " + std::to_string(expected));
    }
    r.need(count * 8);
    std::vector<Tensor> out;
    out.reserve(layout.size());
    for (const Tensor& t : layout) {
        std::vector<double> values(t.size());
        for (double& v : values) {
            v = std::bit_cast<double>(r.unsigned_le(8));
            if (!std::isfinite(v)) throw ParseError(ParseErrorKind::non_finite, path.string(), "non-finite parameter");
        }
        out.emplace_back(t.shape(), std::move(values));
    }
    r.expect_end();
    return out;
}

}  // namespace oodseg::io
