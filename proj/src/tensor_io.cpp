#include "mvc/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mvc {

namespace {

template <class T>
T to_little_endian(T v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &v, sizeof(T));
        for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        std::memcpy(&v, bytes, sizeof(T));
        return v;
    }
}

template <class T>
void append_values(std::string& out, std::span<const double> values) {
    const size_t start = out.size();
    out.resize(start + values.size() * sizeof(T));
    char* dst = out.data() + start;
    for (double v : values) {
        const T le = to_little_endian(static_cast<T>(v));
        std::memcpy(dst, &le, sizeof(T));
        dst += sizeof(T);
    }
}

template <class T>
std::vector<double> parse_values(std::string_view payload, size_t count) {
    if (payload.size() != count * sizeof(T)) throw IoError("tensor payload size does not match header");
    std::vector<double> values(count);
    for (size_t i = 0; i < count; ++i) {
        T v;
        std::memcpy(&v, payload.data() + i * sizeof(T), sizeof(T));
        values[i] = static_cast<double>(to_little_endian(v));
    }
    return values;
}

}  // namespace

std::string encode_tensor(const Tensor& t, Dtype dtype) {
    std::ostringstream header;
    header << kTensorMagic << ' ' << kTensorFormatVersion << ' ' << (dtype == Dtype::F64 ? "f64" : "f32") << ' '
           << t.rank();
    for (int64_t d : t.shape()) header << ' ' << d;
    header << '\n';
    std::string out = header.str();
    if (dtype == Dtype::F64) {
        append_values<double>(out, t.values());
    } else {
        append_values<float>(out, t.values());
    }
    return out;
}

Tensor decode_tensor(std::string_view bytes) {
    const size_t eol = bytes.find('\n');
    if (eol == std::string_view::npos) throw IoError("tensor container: missing header line");
    std::istringstream header{std::string(bytes.substr(0, eol))};
    std::string magic;
    int version = 0;
    std::string dtype;
    int64_t rank = 0;
    header >> magic >> version >> dtype >> rank;
    if (!header || magic != kTensorMagic) throw IoError("tensor container: bad magic");
    if (version != kTensorFormatVersion) throw IoError("tensor container: unsupported version " + std::to_string(version));
    if (rank < 1) throw IoError("tensor container: bad rank");
    Shape shape(static_cast<size_t>(rank));
    for (auto& d : shape) {
        header >> d;
        if (!header || d < 1) throw IoError("tensor container: bad extent");
    }
    std::string trailing;
    if (header >> trailing) throw IoError("tensor container: trailing header tokens");
    const auto count = static_cast<size_t>(numel(shape));
    const std::string_view payload = bytes.substr(eol + 1);
    std::vector<double> values;
    if (dtype == "f64") {
        values = parse_values<double>(payload, count);
    } else if (dtype == "f32") {
        values = parse_values<float>(payload, count);
    } else {
        throw IoError("tensor container: unknown dtype " + dtype);
    }
    return Tensor(std::move(shape), std::move(values));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

void write_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype) {
    write_file(path, encode_tensor(t, dtype));
}

Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

}  // namespace mvc
