#include "confens/persistence.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>

#include "confens/digest.hpp"
#include "confens/errors.hpp"

namespace confens {

using nlohmann::json;

namespace {

constexpr std::array<char, 8> kWeightsMagic = {'C', 'E', 'W', 'G', 'H', 'T', 'S', '\0'};

void put_le(std::vector<std::byte>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffU));
}

std::uint64_t get_le(std::span<const std::byte> in, std::size_t offset, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::to_integer<std::uint64_t>(in[offset + i]) << (8 * i);
    return v;
}

std::vector<std::byte> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> out(raw.size());
    if (!raw.empty()) std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

void write_bytes(std::span<const std::byte> bytes, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

std::string format_double(double v) {
    std::array<char, 32> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

template <typename T>
T required(const json& j, const char* key, const std::string& context) {
    if (!j.contains(key)) throw ManifestError(context + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ManifestError(context + ": field '" + key + "': " + e.what());
    }
}

}  // namespace

std::vector<std::byte> encode_weights(const EnsembleManifest& manifest) {
    std::vector<std::byte> out;
    for (const char c : kWeightsMagic) out.push_back(static_cast<std::byte>(c));
    put_le(out, kWeightsFormatVersion, 4);
    put_le(out, manifest.members.size(), 4);
    for (const auto& m : manifest.members) put_le(out, static_cast<std::uint64_t>(m.model.parameters.size()), 8);
    for (const auto& m : manifest.members)
        for (Eigen::Index i = 0; i < m.model.parameters.size(); ++i)
            put_le(out, std::bit_cast<std::uint64_t>(m.model.parameters[i]), 8);
    return out;
}

std::vector<Vector> decode_weights(std::span<const std::byte> bytes) {
    if (bytes.size() < 16) throw ManifestError("weights file too short for header");
    for (std::size_t i = 0; i < kWeightsMagic.size(); ++i)
        if (bytes[i] != static_cast<std::byte>(kWeightsMagic[i])) throw ManifestError("weights file has bad magic");
    const auto version = get_le(bytes, 8, 4);
    if (version != kWeightsFormatVersion) throw VersionError("unsupported weights version " + std::to_string(version));
    const auto members = get_le(bytes, 12, 4);
    std::size_t offset = 16;
    if (bytes.size() < offset + 8 * members) throw ManifestError("weights file truncated in member table");
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;
    for (std::uint64_t m = 0; m < members; ++m, offset += 8) {
        counts.push_back(get_le(bytes, offset, 8));
        total += counts.back();
    }
    if (bytes.size() != offset + 8 * total)
        throw ManifestError("weights file holds " + std::to_string(bytes.size() - offset) + " payload bytes, header declares " +
                            std::to_string(8 * total));
    std::vector<Vector> out;
    for (const auto count : counts) {
        Vector v(static_cast<Eigen::Index>(count));
        for (std::uint64_t i = 0; i < count; ++i, offset += 8)
            v[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(get_le(bytes, offset, 8));
        out.push_back(std::move(v));
    }
    return out;
}

json manifest_to_json(const EnsembleManifest& m, const std::string& weights_sha256) {
    json members = json::array();
    std::uint64_t offset = 0;
    for (const auto& mem : m.members) {
        const auto& spec = mem.model.spec;
        json jspec = {{"kind", to_string(spec.kind)},
                      {"input_dim", spec.input_dim},
                      {"num_classes", spec.num_classes},
                      {"seed", spec.seed}};
        if (spec.kind == ClassifierKind::mlp) jspec["hidden_units"] = spec.hidden_units;
        const auto count = static_cast<std::uint64_t>(mem.model.parameters.size());
        members.push_back({{"level", mem.level},
                           {"classifier", jspec},
                           {"weights", {{"offset", offset}, {"count", count}}},
                           {"training_fingerprint", mem.model.training_fingerprint},
                           {"subset_size", mem.subset_size},
                           {"subset_digest", mem.subset_digest}});
        offset += count;
    }
    return {{"format_version", m.format_version},
            {"dataset", {{"id", m.dataset_id}, {"digest", m.dataset_digest}}},
            {"selection_rule", to_string(m.selection_rule)},
            {"training_thresholds", m.training_thresholds},
            {"runtime", to_json(m.runtime)},
            {"members", members},
            {"weights", {{"file", kWeightsFile}, {"sha256", weights_sha256}}}};
}

std::string save_manifest(const EnsembleManifest& manifest, const std::filesystem::path& dir) {
    manifest.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const auto weights = encode_weights(manifest);
    write_bytes(weights, dir / kWeightsFile);
    const std::string text = manifest_to_json(manifest, sha256_hex(weights)).dump(2) + "\n";
    write_bytes(std::as_bytes(std::span(text.data(), text.size())), dir / kManifestFile);
    return sha256_hex(text);
}

namespace {

EnsembleManifest parse_manifest(const json& j, const std::filesystem::path& dir) {
    const std::string ctx = (dir / kManifestFile).string();

    EnsembleManifest m;
    m.format_version = required<int>(j, "format_version", ctx);
    if (m.format_version != kManifestFormatVersion)
        throw VersionError(ctx + ": unsupported format_version " + std::to_string(m.format_version));

    const json& ds = j.at("dataset");
    m.dataset_id = required<std::string>(ds, "id", ctx);
    m.dataset_digest = required<std::string>(ds, "digest", ctx);
    try {
        m.selection_rule = selection_rule_from_string(required<std::string>(j, "selection_rule", ctx));
        m.training_thresholds = required<std::vector<double>>(j, "training_thresholds", ctx);
        const json& rt = j.at("runtime");
        m.runtime.thresholds = required<std::vector<double>>(rt, "thresholds", ctx);
        m.runtime.consensus = consensus_from_string(required<std::string>(rt, "consensus", ctx));
    } catch (const ConfigError& e) {
        throw ManifestError(ctx + ": " + e.what());
    }

    const json& wj = j.at("weights");
    const auto weights_file = required<std::string>(wj, "file", ctx);
    if (std::filesystem::path(weights_file).filename().string() != weights_file)
        throw ManifestError(ctx + ": weights file must live next to the manifest");
    const auto bytes = read_bytes(dir / weights_file);
    const auto expected = required<std::string>(wj, "sha256", ctx);
    if (sha256_hex(bytes) != expected) throw DigestError((dir / weights_file).string() + ": sha256 does not match manifest");
    auto params = decode_weights(bytes);

    const json& members = j.at("members");
    if (!members.is_array() || members.size() != params.size())
        throw ManifestError(ctx + ": member list does not match weights file");
    std::uint64_t offset = 0;
    for (std::size_t s = 0; s < members.size(); ++s) {
        const json& mj = members[s];
        const std::string mctx = ctx + ": member " + std::to_string(s);
        MemberDescriptor mem;
        mem.level = required<std::size_t>(mj, "level", mctx);
        const json& cj = mj.at("classifier");
        try {
            mem.model.spec.kind = classifier_kind_from_string(required<std::string>(cj, "kind", mctx));
        } catch (const ConfigError& e) {
            throw ManifestError(mctx + ": " + e.what());
        }
        mem.model.spec.input_dim = required<int>(cj, "input_dim", mctx);
        mem.model.spec.num_classes = required<int>(cj, "num_classes", mctx);
        mem.model.spec.hidden_units = cj.value("hidden_units", 0);
        mem.model.spec.seed = required<std::uint64_t>(cj, "seed", mctx);
        const json& w = mj.at("weights");
        if (required<std::uint64_t>(w, "offset", mctx) != offset ||
            required<std::uint64_t>(w, "count", mctx) != static_cast<std::uint64_t>(params[s].size()))
            throw ManifestError(mctx + ": weight range does not resolve in weights file");
        offset += static_cast<std::uint64_t>(params[s].size());
        mem.model.parameters = std::move(params[s]);
        mem.model.training_fingerprint = required<std::string>(mj, "training_fingerprint", mctx);
        mem.subset_size = required<std::size_t>(mj, "subset_size", mctx);
        mem.subset_digest = required<std::string>(mj, "subset_digest", mctx);
        m.members.push_back(std::move(mem));
    }
    m.validate();
    return m;
}

}  // namespace

EnsembleManifest load_manifest(const std::filesystem::path& dir) {
    try {
        return parse_manifest(read_json(dir / kManifestFile), dir);
    } catch (const json::exception& e) {
        throw ManifestError((dir / kManifestFile).string() + ": " + e.what());
    }
}

void write_subset_index(const SubsetView& view, const std::filesystem::path& path) {
    std::string text;
    for (const auto i : view.indices()) text += std::to_string(i) + "\n";
    write_bytes(std::as_bytes(std::span(text.data(), text.size())), path);
}

std::vector<std::size_t> read_subset_index(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::size_t> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
        if (ec != std::errc{} || ptr != line.data() + line.size())
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": not an index");
        out.push_back(v);
    }
    return out;
}

json to_json(const ScoreHistogram& h) {
    return {{"score_kind", to_string(h.kind)},
            {"bin_edges", h.bin_edges},
            {"correct", h.correct_counts},
            {"incorrect", h.incorrect_counts}};
}

json to_json(const CalibrationReport& r) {
    json bins = json::array();
    for (const auto& b : r.bins)
        bins.push_back({{"left", b.left},
                        {"right", b.right},
                        {"count", b.count},
                        {"mean_top_probability", b.mean_top_probability},
                        {"fraction_correct", b.fraction_correct},
                        {"weight", b.weight}});
    return {{"num_bins", r.num_bins}, {"ece", r.ece}, {"bins", bins}};
}

json to_json(const BuildReport& r) {
    json members = json::array();
    for (const auto& m : r.members)
        members.push_back({{"level", m.level},
                           {"subset_size", m.subset_size},
                           {"subset_digest", m.subset_digest},
                           {"training_seconds", m.training_seconds},
                           {"final_training_loss", m.final_training_loss},
                           {"training_accuracy", m.training_accuracy},
                           {"uncertainty_histogram", to_json(m.uncertainty_histogram)},
                           {"probability_histogram", to_json(m.probability_histogram)}});
    return {{"members", members}};
}

json to_json(const RuntimeConfig& r) {
    return {{"thresholds", r.thresholds}, {"consensus", to_string(r.consensus)}};
}

json to_json(const EvaluationRecord& r) {
    json samples = json::array();
    for (const auto& s : r.samples) {
        json steps = json::array();
        for (const auto& st : s.trace.steps)
            steps.push_back({{"level", st.level},
                             {"class", st.prediction.class_index},
                             {"top_probability", st.prediction.top_probability},
                             {"uncertainty", st.prediction.uncertainty},
                             {"accepted", st.accepted}});
        samples.push_back({{"index", s.index},
                           {"label", s.label},
                           {"chosen_class", s.trace.chosen.class_index},
                           {"chosen_level", s.trace.chosen_level},
                           {"consensus", s.trace.consensus_used()},
                           {"correct", s.correct},
                           {"steps", steps}});
    }
    return {{"runtime", to_json(r.runtime)},
            {"accuracy", r.accuracy},
            {"num_samples", r.samples.size()},
            {"resolved_at_level", r.resolved_at_level},
            {"resolved_by_consensus", r.resolved_by_consensus},
            {"utilization", r.utilization()},
            {"samples", samples}};
}

void write_histogram_csv(const ScoreHistogram& h, const std::filesystem::path& path) {
    std::string text = "bin_left,bin_right,correct,incorrect\n";
    for (std::size_t b = 0; b < h.correct_counts.size(); ++b)
        text += format_double(h.bin_edges[b]) + "," + format_double(h.bin_edges[b + 1]) + "," +
                std::to_string(h.correct_counts[b]) + "," + std::to_string(h.incorrect_counts[b]) + "\n";
    write_bytes(std::as_bytes(std::span(text.data(), text.size())), path);
}

void write_evaluation_csv(const EvaluationRecord& r, const std::filesystem::path& path) {
    const std::size_t members = r.runtime.thresholds.size();
    std::string text = "sample,chosen_class,true_class,answering_level";
    for (std::size_t s = 0; s < members; ++s) text += ",u_" + std::to_string(s);
    text += "\n";
    for (const auto& s : r.samples) {
        text += std::to_string(s.index) + "," + std::to_string(s.trace.chosen.class_index) + "," +
                std::to_string(s.label) + "," +
                (s.trace.accepted_level ? std::to_string(*s.trace.accepted_level) : std::string("consensus"));
        for (std::size_t l = 0; l < members; ++l)
            text += "," + (l < s.trace.steps.size() ? format_double(s.trace.steps[l].prediction.uncertainty) : std::string());
        text += "\n";
    }
    write_bytes(std::as_bytes(std::span(text.data(), text.size())), path);
}

void write_json(const json& j, const std::filesystem::path& path) {
    const std::string text = j.dump(2) + "\n";
    write_bytes(std::as_bytes(std::span(text.data(), text.size())), path);
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return json::parse(in);
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_bytes(path)); }

}  // namespace confens
