#include "spacetime/checkpoint.hpp"

#include "common/binary_io.hpp"

namespace spacetime {

namespace {
constexpr char kMagic[4] = {'S', 'E', 'T', 'T'};
}

const Tensor* Checkpoint::find(std::string_view name) const {
    for (const auto& a : arrays) {
        if (a.name == name) return &a.tensor;
    }
    return nullptr;
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
    io::Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(Checkpoint::kVersion);
    w.u64(checkpoint.arrays.size());
    for (const auto& a : checkpoint.arrays) {
        w.str(a.name);
        const Shape& shape = a.tensor.shape();
        w.u64(shape.size());
        for (std::size_t e : shape) w.u64(e);
        const auto data = a.tensor.data();
        w.f64s(data.data(), data.size());
    }
    w.str(checkpoint.metadata);
    return w.buffer();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    io::Reader r(bytes);
    char magic[4];
    r.bytes(magic, sizeof magic);
    if (std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
        throw FormatError("not a checkpoint: bad magic bytes");
    }
    const std::uint32_t version = r.u32();
    if (version != Checkpoint::kVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint out;
    const std::uint64_t count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedArray a;
        a.name = r.str();
        const std::uint64_t rank = r.u64();
        if (rank > 16) throw FormatError("implausible rank in array '" + a.name + "'");
        Shape shape(rank);
        for (auto& e : shape) e = r.u64();
        std::vector<double> values(shape_numel(shape));
        r.f64s(values.data(), values.size());
        a.tensor = Tensor::from_vector(std::move(shape), std::move(values));
        out.arrays.push_back(std::move(a));
    }
    out.metadata = r.str();
    return out;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    io::write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace spacetime
