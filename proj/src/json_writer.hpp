#pragma once

// Minimal JSON emitter that prints doubles with 17 significant digits so
// parameter files round-trip bit-exactly.

#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

#include "liquid/errors.hpp"

namespace liquid::detail {

inline void append_double(std::string& out, double v) {
    if (!std::isfinite(v)) {
        throw NumericError("cannot serialize non-finite value");
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

inline void append_string(std::string& out, std::string_view s) {
    out += '"';
    for (char ch : s) {
        if (ch == '"' || ch == '\\') {
            out += '\\';
        }
        out += ch;
    }
    out += '"';
}

class JsonObjectWriter {
public:
    JsonObjectWriter() { out_ = "{"; }

    JsonObjectWriter& key(std::string_view k) {
        if (!first_) {
            out_ += ',';
        }
        first_ = false;
        append_string(out_, k);
        out_ += ':';
        return *this;
    }
    JsonObjectWriter& field(std::string_view k, std::string_view v) {
        key(k);
        append_string(out_, v);
        return *this;
    }
    JsonObjectWriter& field(std::string_view k, const char* v) { return field(k, std::string_view(v)); }
    JsonObjectWriter& field(std::string_view k, double v) {
        key(k);
        append_double(out_, v);
        return *this;
    }
    JsonObjectWriter& field_int(std::string_view k, long long v) {
        key(k);
        out_ += std::to_string(v);
        return *this;
    }
    JsonObjectWriter& field(std::string_view k, std::span<const double> values) {
        key(k);
        out_ += '[';
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) {
                out_ += ',';
            }
            append_double(out_, values[i]);
        }
        out_ += ']';
        return *this;
    }
    /// `raw` must already be valid JSON.
    JsonObjectWriter& raw(std::string_view k, std::string_view raw) {
        key(k);
        out_ += raw;
        return *this;
    }
    std::string str() const { return out_ + "}"; }

private:
    std::string out_;
    bool first_ = true;
};

} // namespace liquid::detail
