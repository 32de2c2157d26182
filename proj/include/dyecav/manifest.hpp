#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "dyecav/config.hpp"
#include "dyecav/dye_model.hpp"
#include "dyecav/mode_basis.hpp"

namespace dyecav {

inline constexpr char const* software_version = "1.0.0";

inline std::string sha256_hex(std::string const& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: digest failed");
    static char const hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * length);
    for (unsigned int k = 0; k < length; ++k) {
        out += hex[digest[k] >> 4];
        out += hex[digest[k] & 15];
    }
    return out;
}

inline std::string read_file(std::filesystem::path const& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string grid_digest(SpatialGrid const& g) {
    std::string text;
    char buf[64];
    for (int k = 0; k < g.points(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", g.nodes()[k], g.weights()[k]);
        text += buf;
    }
    return sha256_hex(text);
}

/// Digest of the mode list and of the summed mode density on the grid, which depends on
/// every tabulated eigenfunction.
inline std::string basis_digest(ModeBasis const& basis) {
    std::ostringstream os;
    write_basis_csv(os, basis);
    Eigen::MatrixXd const total = basis.synthesize(Eigen::VectorXd::Ones(basis.size()));
    char buf[32];
    for (Eigen::Index i = 0; i < total.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g\n", total.data()[i]);
        os << buf;
    }
    return sha256_hex(os.str());
}

inline json dye_provenance(DyeConfig const& d) {
    json j;
    switch (d.source) {
    case DyeConfig::Source::surrogate:
        j["source"] = "surrogate";
        j["absorption_at_anchor_kHz_d2"] = d.absorption_at_anchor_khz;
        j["anchor_THz"] = d.anchor_thz;
        j["log_slope_per_THz"] = d.log_slope_per_thz;
        j["zero_phonon_THz"] = d.zero_phonon_thz;
        j["ks_constant"] = d.ks_constant;
        j["temperature_K"] = d.temperature_k;
        break;
    case DyeConfig::Source::tabulated:
        j["source"] = "tabulated";
        j["spectra_path"] = d.spectra_path;
        j["spectra_sha256"] = sha256_hex(read_file(d.spectra_path));
        break;
    case DyeConfig::Source::band: {
        j["source"] = "band";
        std::ostringstream os;
        write_spectra_csv(os, band_rows(d));
        j["table_sha256"] = sha256_hex(os.str());
        break;
    }
    }
    return j;
}

struct CellTiming {
    std::string label;
    double seconds = 0.0;
    std::string method;
    bool converged = false;
};

/// Everything needed to rerun a result: the config snapshot (re-ingestible as a config),
/// input digests, software version, per-cell timing, output digests.
struct RunManifest {
    std::string command;
    RunConfig config;
    std::string grid_sha256;
    std::string basis_sha256;
    json dye;
    std::vector<CellTiming> cells;
    double total_seconds = 0.0;
    bool all_converged = true;
    json failures = json::array();
    std::vector<std::pair<std::string, std::string>> outputs;  // file name, sha256

    json to_json() const {
        json j;
        j["tool"] = "dyecav";
        j["version"] = software_version;
        j["command"] = command;
        j["config"] = config_to_json(config);
        j["provenance"] = {{"grid_sha256", grid_sha256}, {"basis_sha256", basis_sha256}, {"dye", dye}};
        json cells_json = json::array();
        for (auto const& c : cells)
            cells_json.push_back({{"cell", c.label}, {"seconds", c.seconds}, {"method", c.method}, {"converged", c.converged}});
        j["timing"] = {{"total_seconds", total_seconds}, {"cells", cells_json}};
        j["status"] = {{"all_converged", all_converged}, {"failures", failures}};
        json out = json::object();
        for (auto const& [name, digest] : outputs) out[name] = digest;
        j["outputs"] = out;
        return j;
    }
};

inline RunManifest make_manifest(std::string command, RunConfig const& config, ModeBasis const& basis) {
    RunManifest m;
    m.command = std::move(command);
    m.config = config;
    m.grid_sha256 = grid_digest(basis.grid());
    m.basis_sha256 = basis_digest(basis);
    m.dye = dye_provenance(config.dye);
    return m;
}

} // namespace dyecav
