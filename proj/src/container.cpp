#include "biomoe/container.hpp"

#include "biomoe/error.hpp"
#include "biomoe/image.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <limits>
#include <string>

namespace biomoe {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

namespace {

constexpr std::uint8_t kMagic[4] = {'T', 'B', 'M', 'E'};
constexpr std::uint8_t kDtypeF32 = 0;

class Writer {
public:
    template <typename T>
    void put(T v)
    {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        out.insert(out.end(), p, p + sizeof(T));
    }
    void put_bytes(const void* data, std::size_t n)
    {
        const auto* p = static_cast<const std::uint8_t*>(data);
        out.insert(out.end(), p, p + n);
    }

    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    template <typename T>
    T get(const char* what)
    {
        T v;
        std::memcpy(&v, take(sizeof(T), what), sizeof(T));
        return v;
    }
    const std::uint8_t* take(std::size_t n, const char* what)
    {
        if (n > bytes_.size() - pos_)
            throw IntegrityError(std::string("container truncated while reading ") + what + " at byte " +
                                 std::to_string(pos_));
        const auto* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) noexcept
{
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t done = 0;
    // zlib takes a uInt length
    while (done < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
        crc = crc32(crc, bytes.data() + done, chunk);
        done += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_container(const WeightStore& weights)
{
    Writer w;
    w.put_bytes(kMagic, 4);
    w.put<std::uint32_t>(kContainerVersion);
    if (weights.size() > std::numeric_limits<std::uint32_t>::max())
        throw UsageError("too many tensors for a container");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(weights.size()));
    for (const auto& [name, t] : weights.entries()) {
        if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max())
            throw UsageError("tensor name length out of range: '" + name + "'");
        if (t.rank() > std::numeric_limits<std::uint8_t>::max())
            throw UsageError("tensor " + name + " has too many dimensions");
        w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
        w.put_bytes(name.data(), name.size());
        w.put<std::uint8_t>(kDtypeF32);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
        for (std::size_t d : t.dims()) {
            if (d > std::numeric_limits<std::uint32_t>::max())
                throw UsageError("tensor " + name + " has an extent beyond 32 bits");
            w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
        }
        w.put_bytes(t.raw(), t.size() * sizeof(float));
    }
    w.put<std::uint32_t>(crc32_of(w.out));
    return std::move(w.out);
}

WeightStore decode_container(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 16)
        throw IntegrityError("container too short (" + std::to_string(bytes.size()) + " bytes)");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw IntegrityError("not a weight container (bad magic)");
    const auto body = bytes.first(bytes.size() - 4);
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + body.size(), 4);
    if (crc32_of(body) != stored)
        throw IntegrityError("container checksum mismatch");

    Reader r(body);
    (void)r.take(4, "magic");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kContainerVersion)
        throw IntegrityError("unsupported container version " + std::to_string(version));
    const auto count = r.get<std::uint32_t>("tensor count");

    WeightStore out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint16_t>("name length");
        if (len == 0)
            throw IntegrityError("tensor " + std::to_string(i) + " has an empty name");
        const auto* p = r.take(len, "name");
        std::string name(reinterpret_cast<const char*>(p), len);
        const auto dtype = r.get<std::uint8_t>("dtype");
        if (dtype != kDtypeF32)
            throw IntegrityError("tensor " + name + " has unsupported dtype " + std::to_string(dtype));
        const auto rank = r.get<std::uint8_t>("rank");
        Shape dims(rank);
        std::size_t volume = 1;
        for (auto& d : dims) {
            d = r.get<std::uint32_t>("dims");
            if (d != 0 && volume > r.remaining() / d)
                throw IntegrityError("tensor " + name + " claims more data than the container holds");
            volume *= d;
        }
        if (volume > r.remaining() / sizeof(float))
            throw IntegrityError("tensor " + name + " claims more data than the container holds");
        Tensor t(dims);
        std::memcpy(t.raw(), r.take(volume * sizeof(float), "tensor data"), volume * sizeof(float));
        if (out.contains(name))
            throw IntegrityError("duplicate tensor name " + name);
        out.insert(std::move(name), std::move(t));
    }
    if (r.remaining() != 0)
        throw IntegrityError(std::to_string(r.remaining()) + " unexpected bytes after the last tensor");
    return out;
}

void save_container(const std::filesystem::path& path, const WeightStore& weights)
{
    write_file_atomic(path, encode_container(weights));
}

WeightStore load_container(const std::filesystem::path& path)
{
    return decode_container(read_file(path));
}

}  // namespace biomoe
