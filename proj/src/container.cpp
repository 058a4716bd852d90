#include "imsat/container.hpp"

#include <cstring>
#include <fstream>

#include "imsat/errors.hpp"

namespace imsat {

namespace {

// The container is defined little-endian; this implementation targets
// little-endian hosts and writes native byte order.
static_assert(sizeof(double) == 8, "container format needs 64-bit doubles");

void put_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}

std::uint64_t get_u64(std::ifstream& in, long long& offset) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (in.gcount() != 8) throw FormatError("container truncated", offset);
    offset += 8;
    return v;
}

}  // namespace

void write_container(const std::string& path, const char magic[12], std::uint32_t version,
                     const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out.write(magic, 12);
    out.write(reinterpret_cast<const char*>(&version), 4);
    for (const NamedTensor& t : tensors) {
        put_u64(out, t.name.size());
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_u64(out, t.dims.size());
        for (std::size_t d : t.dims) put_u64(out, d);
        if (t.values.size() != t.element_count())
            throw FormatError("tensor '" + t.name + "' has inconsistent element count");
        out.write(reinterpret_cast<const char*>(t.values.data()),
                  static_cast<std::streamsize>(t.values.size() * 8));
    }
    if (!out) throw FormatError("write failed for '" + path + "'");
}

std::vector<NamedTensor> read_container(const std::string& path, const char magic[12],
                                        std::uint32_t expected_version) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    long long offset = 0;

    char got_magic[12];
    in.read(got_magic, 12);
    if (in.gcount() != 12 || std::memcmp(got_magic, magic, 12) != 0)
        throw FormatError("bad magic in '" + path + "'", 0);
    offset = 12;

    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (in.gcount() != 4) throw FormatError("container truncated", offset);
    if (version != expected_version)
        throw FormatError("unsupported container version " + std::to_string(version), offset);
    offset = 16;

    std::vector<NamedTensor> tensors;
    while (true) {
        in.peek();
        if (in.eof()) break;

        NamedTensor t;
        const std::uint64_t name_len = get_u64(in, offset);
        if (name_len > 4096) throw FormatError("implausible tensor name length", offset - 8);
        t.name.resize(name_len);
        in.read(t.name.data(), static_cast<std::streamsize>(name_len));
        if (static_cast<std::uint64_t>(in.gcount()) != name_len)
            throw FormatError("container truncated in tensor name", offset);
        offset += static_cast<long long>(name_len);

        const std::uint64_t rank = get_u64(in, offset);
        if (rank > 8) throw FormatError("implausible tensor rank", offset - 8);
        std::size_t count = 1;
        for (std::uint64_t r = 0; r < rank; ++r) {
            const std::uint64_t d = get_u64(in, offset);
            t.dims.push_back(static_cast<std::size_t>(d));
            count *= static_cast<std::size_t>(d);
        }
        t.values.resize(count);
        in.read(reinterpret_cast<char*>(t.values.data()),
                static_cast<std::streamsize>(count * 8));
        if (static_cast<std::size_t>(in.gcount()) != count * 8)
            throw FormatError("container truncated in tensor data", offset);
        offset += static_cast<long long>(count * 8);
        tensors.push_back(std::move(t));
    }
    return tensors;
}

}  // namespace imsat
