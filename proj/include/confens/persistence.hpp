#ifndef CONFENS_PERSISTENCE_HPP
#define CONFENS_PERSISTENCE_HPP

// On-disk layout of a built ensemble directory:
//
//   manifest.json       format_version, members (spec, fingerprint, weight
//                       range), selection rule, thresholds, default runtime
//                       config, dataset id/digest, weights sha256
//   weights.bin         "CEWGHTS\0", u32 version, u32 member count,
//                       u64 parameter count per member, then every member's
//                       parameters as little-endian IEEE-754 doubles
//   build_report.json   per-member pool sizes, losses, score histograms
//   subsets/level_s.idx newline-delimited dataset indices of pool s (s >= 1)

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

#include "confens/cascade.hpp"
#include "confens/dataset.hpp"
#include "confens/ensemble.hpp"
#include "confens/metrics.hpp"

namespace confens {

inline constexpr char kManifestFile[] = "manifest.json";
inline constexpr char kWeightsFile[] = "weights.bin";
inline constexpr std::uint32_t kWeightsFormatVersion = 1;

std::vector<std::byte> encode_weights(const EnsembleManifest& manifest);
// Parameter vectors in member order; throws ManifestError on any length or
// header inconsistency.
std::vector<Vector> decode_weights(std::span<const std::byte> bytes);

nlohmann::json manifest_to_json(const EnsembleManifest& manifest, const std::string& weights_sha256);

// Writes manifest.json and weights.bin into `dir` (created if needed).
// Returns the sha256 of the written manifest.json.
std::string save_manifest(const EnsembleManifest& manifest, const std::filesystem::path& dir);

// Throws VersionError for an unknown format_version and DigestError when the
// weights do not match the recorded sha256.
EnsembleManifest load_manifest(const std::filesystem::path& dir);

void write_subset_index(const SubsetView& view, const std::filesystem::path& path);
std::vector<std::size_t> read_subset_index(const std::filesystem::path& path);

nlohmann::json to_json(const ScoreHistogram& h);
nlohmann::json to_json(const CalibrationReport& r);
nlohmann::json to_json(const BuildReport& r);
nlohmann::json to_json(const RuntimeConfig& r);
nlohmann::json to_json(const EvaluationRecord& r);

// Columns: bin_left,bin_right,correct,incorrect
void write_histogram_csv(const ScoreHistogram& h, const std::filesystem::path& path);

// Columns: sample,chosen_class,true_class,answering_level,u_0..u_{S-1}
// answering_level is the accepting member or "consensus"; levels that were
// not consulted are left empty.
void write_evaluation_csv(const EvaluationRecord& r, const std::filesystem::path& path);

void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

std::string file_sha256(const std::filesystem::path& path);

}  // namespace confens

#endif  // CONFENS_PERSISTENCE_HPP
