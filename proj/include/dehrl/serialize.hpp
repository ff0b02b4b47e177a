#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace dehrl {

/// Raised when a checkpoint stream is truncated or carries the wrong tag.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Little binary archive used by checkpoints. Values are written in host byte
/// order; doubles are copied bit-for-bit so a load reproduces them exactly.
class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {}

    template <typename T>
        requires std::is_arithmetic_v<T> || std::is_enum_v<T>
    void write(T value) {
        out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void write(const std::vector<T>& values) {
        write<std::uint64_t>(values.size());
        if (!values.empty())
            out_.write(reinterpret_cast<const char*>(values.data()),
                       static_cast<std::streamsize>(values.size() * sizeof(T)));
    }

    void write(const std::string& s) {
        write<std::uint64_t>(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    void write(const std::mt19937_64& rng) {
        std::ostringstream ss;
        ss << rng;
        write(ss.str());
    }

    // Section tags catch reader/writer drift early.
    void tag(const char (&name)[5]) { out_.write(name, 4); }

private:
    std::ostream& out_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::istream& in) : in_(in) {}

    template <typename T>
        requires std::is_arithmetic_v<T> || std::is_enum_v<T>
    T read() {
        T value{};
        in_.read(reinterpret_cast<char*>(&value), sizeof(T));
        check();
        return value;
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    std::vector<T> read_vector() {
        const auto n = read<std::uint64_t>();
        if (n > (std::uint64_t{1} << 34))
            throw FormatError("checkpoint vector length is implausible");
        std::vector<T> values(n);
        if (n != 0) {
            in_.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(T)));
            check();
        }
        return values;
    }

    std::string read_string() {
        const auto n = read<std::uint64_t>();
        if (n > (std::uint64_t{1} << 32))
            throw FormatError("checkpoint string length is implausible");
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        check();
        return s;
    }

    void read(std::mt19937_64& rng) {
        std::istringstream ss(read_string());
        ss >> rng;
        if (ss.fail())
            throw FormatError("corrupt generator state in checkpoint");
    }

    void expect(const char (&name)[5]) {
        char got[4];
        in_.read(got, 4);
        check();
        if (std::memcmp(got, name, 4) != 0)
            throw FormatError(std::string("checkpoint section mismatch, expected '") + name + "'");
    }

private:
    void check() {
        if (!in_)
            throw FormatError("unexpected end of checkpoint stream");
    }

    std::istream& in_;
};

}  // namespace dehrl
