#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lssm/integrate.hpp"

namespace lssm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint layout is little-endian IEEE-754");

namespace detail {

constexpr char kMagic[4] = {'L', 'S', 'S', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("checkpoint: truncated file");
}

} // namespace detail

/// Binary state container. Header: magic "LSSM", format_version u32, n u32,
/// ell f64, t f64, step u64, rng_state_len u32, rng_state bytes. Body: the 3
/// coefficient arrays component-major in storage (kappa-lexicographic) order,
/// each coefficient as little-endian IEEE-754 (re, im) doubles. Field files
/// use the same container with rng_state_len = 0.
inline void save_checkpoint(const std::string& path, const SimState& state) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(detail::kMagic, 4);
    detail::write_pod(out, detail::kFormatVersion);
    detail::write_pod(out, static_cast<std::uint32_t>(state.u.grid().n()));
    detail::write_pod(out, state.u.grid().ell());
    detail::write_pod(out, state.t);
    detail::write_pod(out, state.step_index);
    const std::vector<std::uint8_t> rng_blob = state.rng.serialize();
    detail::write_pod(out, static_cast<std::uint32_t>(rng_blob.size()));
    out.write(reinterpret_cast<const char*>(rng_blob.data()),
              static_cast<std::streamsize>(rng_blob.size()));
    for (int c = 0; c < 3; ++c) {
        const auto& comp = state.u.component(c);
        out.write(reinterpret_cast<const char*>(comp.data()),
                  static_cast<std::streamsize>(comp.size() * sizeof(Complex)));
    }
    if (!out) throw IoError("checkpoint write failed: " + path);
}

inline void save_field(const std::string& path, const SpectralVelocity& u,
                       double t = 0.0, std::uint64_t step = 0) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open field file for writing: " + path);
    out.write(detail::kMagic, 4);
    detail::write_pod(out, detail::kFormatVersion);
    detail::write_pod(out, static_cast<std::uint32_t>(u.grid().n()));
    detail::write_pod(out, u.grid().ell());
    detail::write_pod(out, t);
    detail::write_pod(out, step);
    detail::write_pod(out, static_cast<std::uint32_t>(0));
    for (int c = 0; c < 3; ++c) {
        const auto& comp = u.component(c);
        out.write(reinterpret_cast<const char*>(comp.data()),
                  static_cast<std::streamsize>(comp.size() * sizeof(Complex)));
    }
    if (!out) throw IoError("field write failed: " + path);
}

namespace detail {

struct CheckpointHeader {
    std::uint32_t n = 0;
    double ell = 0.0;
    double t = 0.0;
    std::uint64_t step = 0;
    std::vector<std::uint8_t> rng_blob;
};

inline CheckpointHeader read_header(std::ifstream& in, const std::string& path) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("not a checkpoint/field file: " + path);
    std::uint32_t version = 0;
    read_pod(in, version);
    if (version != kFormatVersion)
        throw IoError("unsupported checkpoint format version in " + path);
    CheckpointHeader h;
    read_pod(in, h.n);
    read_pod(in, h.ell);
    read_pod(in, h.t);
    read_pod(in, h.step);
    std::uint32_t rng_len = 0;
    read_pod(in, rng_len);
    h.rng_blob.resize(rng_len);
    if (rng_len > 0) {
        in.read(reinterpret_cast<char*>(h.rng_blob.data()), rng_len);
        if (!in) throw IoError("checkpoint: truncated rng state in " + path);
    }
    return h;
}

inline SpectralVelocity read_body(std::ifstream& in, const CheckpointHeader& h,
                                  const std::string& path) {
    Grid grid(static_cast<int>(h.n), h.ell);
    SpectralVelocity u(grid);
    for (int c = 0; c < 3; ++c) {
        auto& comp = u.component(c);
        in.read(reinterpret_cast<char*>(comp.data()),
                static_cast<std::streamsize>(comp.size() * sizeof(Complex)));
        if (!in) throw IoError("checkpoint: truncated coefficient data in " + path);
    }
    in.peek();
    if (!in.eof()) throw IoError("checkpoint: trailing bytes in " + path);
    return u;
}

} // namespace detail

inline SimState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    const auto h = detail::read_header(in, path);
    if (h.rng_blob.empty()) throw IoError("field file lacks rng state, not a checkpoint: " + path);
    SimState s{detail::read_body(in, h, path), h.t, h.step,
               RngStream::deserialize(h.rng_blob.data(), h.rng_blob.size())};
    return s;
}

inline std::pair<SpectralVelocity, double> load_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open field file: " + path);
    const auto h = detail::read_header(in, path);
    return {detail::read_body(in, h, path), h.t};
}

/// Resolve a file-backed forcing spec against the run grid.
inline void resolve_forcing(ForcingSpec& fs, const Grid& grid) {
    if (fs.type != ForcingSpec::Type::file || !fs.field_data.empty()) return;
    auto [field, t] = load_field(fs.path);
    (void)t;
    if (field.grid() != grid)
        throw IoError("forcing field file grid does not match the run grid: " + fs.path);
    fs.field_data.emplace_back();
    for (int c = 0; c < 3; ++c) fs.field_data[0][c] = field.component(c);
}

} // namespace lssm
