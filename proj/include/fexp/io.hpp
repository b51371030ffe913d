// Output plumbing: CSV and JSON writers, chain/summary serialization and a
// small structural validator for the shipped JSON schemas (type, required,
// properties, items, enum -- the subset the schemas use).

#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "fexp/config.hpp"
#include "fexp/inference.hpp"
#include "fexp/simulate.hpp"

namespace fexp {

using nlohmann::json;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out)
        throw IoError("failed writing '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// CSV: comma separators, '.' decimal point, header row, 17 significant
// digits so deterministic outputs are byte-stable.
inline std::string csv_format(const std::vector<std::string>& header,
                              const std::vector<std::vector<double>>& rows,
                              const std::string& preamble = "") {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(17);
    if (!preamble.empty())
        os << preamble;
    for (std::size_t i = 0; i < header.size(); ++i)
        os << (i ? "," : "") << header[i];
    os << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            os << (i ? "," : "") << row[i];
        os << "\n";
    }
    return os.str();
}

// Sample path CSV: one value per line under a value header; the comment
// line carries the provenance stamps.
inline std::string path_to_csv(const SamplePath& path, const std::string& cfg_hash,
                               const std::string& truth_hash_) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(17);
    os << "# config=" << cfg_hash << " truth=" << truth_hash_
       << " seed=" << path.seed << " generator=" << path.generator
       << " n=" << path.n() << " rng=" << kRngName << "\n";
    os << "value\n";
    for (double v : path.values)
        os << v << "\n";
    return os.str();
}

inline std::vector<double> path_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::vector<double> values;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#' || line == "value")
            continue;
        try {
            values.push_back(std::stod(line));
        } catch (...) {
            throw IoError("path CSV: bad value line '" + line + "'");
        }
    }
    if (values.empty())
        throw IoError("path CSV: no values");
    return values;
}

inline std::string chain_to_csv(const PosteriorChain& chain,
                                const std::string& cfg_hash) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(17);
    os << "# config=" << cfg_hash << " k=" << chain.k << " seed=" << chain.seed
       << " warmup=" << chain.warmup << " iters=" << chain.iters << "\n";
    os << "iteration,d";
    for (std::int64_t j = 0; j <= chain.k; ++j)
        os << ",theta_" << j;
    os << ",log_post\n";
    for (std::size_t i = 0; i < chain.size(); ++i) {
        os << i << "," << chain.d[i];
        for (double th : chain.theta[i])
            os << "," << th;
        os << "," << chain.log_post[i] << "\n";
    }
    return os.str();
}

inline json summary_to_json(const PosteriorSummary& s) {
    json j;
    j["d_mean"] = s.d_mean;
    j["d_sd"] = s.d_sd;
    j["credible90"] = {s.credible90_lo, s.credible90_hi};
    j["ks_to_normal"] = s.ks_to_normal;
    json kw = json::array();
    for (const auto& [k, w] : s.k_weights)
        kw.push_back({{"k", k}, {"weight", w}});
    j["k_weights"] = kw;
    return j;
}

inline json bvm_report_to_json(const BvmReport& r) {
    json j;
    j["ks_to_normal"] = r.ks_to_normal;
    j["z_mean"] = r.z_mean;
    j["var_ratio"] = r.var_ratio;
    j["center"] = r.params.center;
    j["sd"] = r.params.sd;
    j["b_n_det"] = r.params.b_n_det;
    j["k_used"] = r.params.k_used;
    return j;
}

// ---------------------------------------------------------------------------
// Minimal JSON-schema structural validation

inline bool schema_validate(const json& value, const json& schema,
                            std::string* why = nullptr) {
    const auto fail = [&](const std::string& msg) {
        if (why)
            *why = msg;
        return false;
    };
    if (schema.contains("type")) {
        const std::string t = schema["type"];
        const bool ok = (t == "object" && value.is_object()) ||
                        (t == "array" && value.is_array()) ||
                        (t == "number" && value.is_number()) ||
                        (t == "integer" && value.is_number_integer()) ||
                        (t == "string" && value.is_string()) ||
                        (t == "boolean" && value.is_boolean());
        if (!ok)
            return fail("expected type " + t);
    }
    if (schema.contains("enum")) {
        bool ok = false;
        for (const auto& e : schema["enum"])
            ok = ok || e == value;
        if (!ok)
            return fail("value not in enum");
    }
    if (schema.contains("required")) {
        for (const auto& r : schema["required"])
            if (!value.contains(r.get<std::string>()))
                return fail("missing required key " + r.get<std::string>());
    }
    if (schema.contains("properties") && value.is_object()) {
        for (const auto& [key, sub] : schema["properties"].items())
            if (value.contains(key) && !schema_validate(value.at(key), sub, why))
                return fail((why ? *why + " " : "") + "at key " + key);
    }
    if (schema.contains("items") && value.is_array()) {
        for (const auto& item : value)
            if (!schema_validate(item, schema["items"], why))
                return fail((why ? *why + " " : "") + "in array item");
    }
    return true;
}

} // namespace fexp
