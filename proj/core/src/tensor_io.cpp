#include "dispred/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "dispred/fsio.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes a little-endian host");

namespace dispred {

namespace {

template <class T>
void put(std::string& buf, T v) {
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf.append(raw, sizeof(T));
}

class Reader {
public:
    Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

    template <class T>
    T get() {
        if (pos_ + sizeof(T) > buf_.size())
            throw CheckpointError("truncated file: " + path_);
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_string(std::size_t len) {
        if (pos_ + len > buf_.size())
            throw CheckpointError("truncated file: " + path_);
        std::string s = buf_.substr(pos_, len);
        pos_ += len;
        return s;
    }

    void get_doubles(double* dst, std::size_t count) {
        std::size_t bytes = count * sizeof(double);
        if (pos_ + bytes > buf_.size())
            throw CheckpointError("truncated file: " + path_);
        std::memcpy(dst, buf_.data() + pos_, bytes);
        pos_ += bytes;
    }

    bool at_end() const { return pos_ == buf_.size(); }

private:
    const std::string& buf_;
    std::string path_;
    std::size_t pos_ = 0;
};

} // namespace

void write_tensor_file(const std::string& path, const std::string& magic8,
                       std::uint32_t version, const std::vector<std::uint32_t>& meta,
                       const std::vector<NamedTensor>& tensors) {
    if (magic8.size() != 8)
        throw ParameterError("write_tensor_file: magic must be 8 bytes");
    std::string buf;
    buf.append(magic8);
    put<std::uint32_t>(buf, version);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(meta.size()));
    for (std::uint32_t v : meta) put<std::uint32_t>(buf, v);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.name.size()));
        buf.append(t.name);
        put<std::uint64_t>(buf, static_cast<std::uint64_t>(t.value.rows()));
        put<std::uint64_t>(buf, static_cast<std::uint64_t>(t.value.cols()));
        buf.append(reinterpret_cast<const char*>(t.value.data()),
                   static_cast<std::size_t>(t.value.size()) * sizeof(double));
    }
    atomic_write_file(path, buf);
}

TensorFile read_tensor_file(const std::string& path, const std::string& magic8,
                            std::uint32_t expected_version) {
    std::string buf;
    try {
        buf = read_file(path);
    } catch (const DataError& e) {
        throw CheckpointError(e.what());
    }
    Reader r(buf, path);
    if (r.get_string(8) != magic8)
        throw CheckpointError("bad magic in " + path);
    TensorFile f;
    f.version = r.get<std::uint32_t>();
    if (f.version != expected_version)
        throw CheckpointError("unsupported format version " + std::to_string(f.version) +
                              " in " + path + " (expected " + std::to_string(expected_version) + ")");
    std::uint32_t n_meta = r.get<std::uint32_t>();
    f.meta.reserve(n_meta);
    for (std::uint32_t i = 0; i < n_meta; ++i) f.meta.push_back(r.get<std::uint32_t>());
    std::uint32_t n_tensors = r.get<std::uint32_t>();
    f.tensors.reserve(n_tensors);
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        NamedTensor t;
        std::uint32_t name_len = r.get<std::uint32_t>();
        t.name = r.get_string(name_len);
        auto rows = r.get<std::uint64_t>();
        auto cols = r.get<std::uint64_t>();
        std::uint64_t max_elems = buf.size() / sizeof(double) + 1;
        if (rows != 0 && cols > max_elems / rows)
            throw CheckpointError("corrupt tensor shape in " + path);
        t.value = Matrix(static_cast<Index>(rows), static_cast<Index>(cols));
        r.get_doubles(t.value.data(), static_cast<std::size_t>(rows * cols));
        f.tensors.push_back(std::move(t));
    }
    if (!r.at_end())
        throw CheckpointError("trailing bytes in " + path);
    return f;
}

} // namespace dispred
