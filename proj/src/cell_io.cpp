#include "liquid/cell_io.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include "json_writer.hpp"
#include "liquid/errors.hpp"

namespace liquid {

std::string cell_to_json(const CellParameters& params) {
    detail::JsonObjectWriter arrays;
    params.visit([&](std::string_view name, const std::vector<double>& v, bool) {
        arrays.field(name, std::span<const double>(v));
    });
    detail::JsonObjectWriter doc;
    doc.field_int("format_version", kFormatVersion)
        .field("kind", to_string(params.kind))
        .field_int("m", static_cast<long long>(params.m))
        .field_int("n", static_cast<long long>(params.n))
        .field("dt", params.dt)
        .raw("arrays", arrays.str());
    return doc.str();
}

CellParameters cell_from_json(const nlohmann::json& doc) {
    try {
        const int version = doc.at("format_version").get<int>();
        if (version != kFormatVersion) {
            throw IoError("unsupported format_version " + std::to_string(version));
        }
        const CellKind kind = parse_cell_kind(doc.at("kind").get<std::string>());
        const auto m = doc.at("m").get<std::size_t>();
        const auto n = doc.at("n").get<std::size_t>();
        CellParameters params = zero_parameters(kind, m, n, doc.at("dt").get<double>());
        const auto& arrays = doc.at("arrays");
        std::size_t seen = 0;
        params.visit([&](std::string_view name, std::vector<double>& v, bool) {
            const auto it = arrays.find(std::string(name));
            if (it == arrays.end()) {
                throw IoError("missing array '" + std::string(name) + "'");
            }
            auto values = it->get<std::vector<double>>();
            if (values.size() != v.size()) {
                throw DimensionError("array '" + std::string(name) + "' has length " +
                                     std::to_string(values.size()) + ", expected " +
                                     std::to_string(v.size()));
            }
            v = std::move(values);
            ++seen;
        });
        if (seen != arrays.size()) {
            throw IoError("unexpected arrays in cell document for kind " +
                          std::string(to_string(kind)));
        }
        params.validate();
        return params;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed cell document: ") + e.what());
    }
}

CellParameters cell_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("invalid JSON: ") + e.what());
    }
    return cell_from_json(doc);
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create directory " + path.parent_path().string() + ": " +
                          ec.message());
        }
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp.string() + " for writing");
        }
        out << contents;
        out.flush();
        if (!out) {
            throw IoError("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " +
                      ec.message());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace liquid
