// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/errors.hpp"
#include "ldla/tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

// Little-endian primitives shared by the codec and checkpoint formats.
namespace ldla::bin {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian hosts");

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) {
        throw ParseError("unexpected end of binary stream");
    }
    return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
    const auto n = get<std::uint32_t>(in);
    if (n > (1u << 28)) {
        throw ParseError("string length out of range in binary stream");
    }
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) {
        throw ParseError("unexpected end of binary stream");
    }
    return s;
}

inline void put_tensor(std::ostream& out, const Tensor& t) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

inline Tensor get_tensor(std::istream& in) {
    const auto rank = get<std::uint32_t>(in);
    if (rank > 8) {
        throw ParseError("tensor rank out of range in binary stream");
    }
    std::vector<int> shape(rank);
    std::size_t n = rank ? 1 : 0;
    for (auto& d : shape) {
        d = static_cast<int>(get<std::uint32_t>(in));
        n *= static_cast<std::size_t>(d);
    }
    if (n > (std::size_t{1} << 32)) {
        throw ParseError("tensor too large in binary stream");
    }
    std::vector<double> values(n);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) {
        throw ParseError("unexpected end of binary stream");
    }
    return Tensor(std::move(shape), std::move(values));
}

}  // namespace ldla::bin
