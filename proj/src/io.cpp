#include "kdiqa/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kdiqa/error.hpp"

namespace kdiqa::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kEmbeddingMagic[4] = {'I', 'Q', 'E', 'B'};
constexpr char kCheckpointMagic[4] = {'I', 'Q', 'P', 'W'};
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& out, double v) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put_u32(out, bits);
}

class Reader {
public:
    Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    double f32() {
        const std::uint32_t bits = u32("payload");
        float f;
        std::memcpy(&f, &bits, sizeof f);
        return f;
    }

    void magic(const char (&expected)[4]) {
        if (bytes_.size() < 4 || std::memcmp(bytes_.data(), expected, 4) != 0)
            fail(ErrorKind::format, origin_ + ": bad magic, expected \"" + std::string(expected, 4) + "\"");
        pos_ = 4;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }
    const std::string& origin() const { return origin_; }

private:
    void need(std::size_t n, const char* what) {
        if (pos_ + n > bytes_.size())
            fail(ErrorKind::corruption, origin_ + ": truncated while reading " + what);
    }

    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

void check_payload(const Reader& r, std::uint64_t floats) {
    const std::uint64_t expected = floats * 4;
    if (r.remaining() != expected)
        fail(ErrorKind::corruption, r.origin() + ": payload holds " + std::to_string(r.remaining()) +
                                        " bytes, header implies " + std::to_string(expected));
}

fs::path bank_meta_path(const fs::path& iqeb) { return iqeb.parent_path() / "bank.json"; }

}  // namespace

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::data, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::data, "cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) fail(ErrorKind::data, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::vector<Embedding> read_embeddings(const fs::path& path) {
    const std::string bytes = read_file(path);
    Reader r(bytes, path.string());
    r.magic(kEmbeddingMagic);
    if (bytes.size() < kHeaderBytes) fail(ErrorKind::corruption, path.string() + ": header truncated");
    const std::uint32_t version = r.u32("version");
    if (version != kFormatVersion)
        fail(ErrorKind::format, path.string() + ": unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32("count");
    const std::uint32_t dim = r.u32("dim");
    check_payload(r, static_cast<std::uint64_t>(count) * dim);
    std::vector<Embedding> rows(count);
    for (auto& e : rows) {
        e.values.resize(dim);
        for (auto& v : e.values) v = r.f32();
    }
    return rows;
}

void write_embeddings(const fs::path& path, std::span<const Embedding> rows) {
    const std::size_t dim = rows.empty() ? 0 : rows.front().dim();
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].dim() != dim)
            fail(ErrorKind::shape, "write_embeddings: row " + std::to_string(i) + " has dim " +
                                       std::to_string(rows[i].dim()) + ", expected " + std::to_string(dim));
    std::string out(kEmbeddingMagic, 4);
    out.reserve(kHeaderBytes + rows.size() * dim * 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(rows.size()));
    put_u32(out, static_cast<std::uint32_t>(dim));
    for (const auto& e : rows)
        for (double v : e.values) put_f32(out, v);
    write_file_atomic(path, out);
}

std::vector<SidecarRecord> read_sidecar(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::data, "cannot open " + path.string());
    std::vector<SidecarRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail(ErrorKind::format, where + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j.contains("mos") || !j["id"].is_string() ||
            !j["mos"].is_number())
            fail(ErrorKind::format, where + ": record needs string \"id\" and numeric \"mos\"");
        for (const auto& [key, _] : j.items())
            if (key != "id" && key != "mos" && key != "raw_score")
                fail(ErrorKind::format, where + ": unknown field \"" + key + "\"");
        SidecarRecord rec{j["id"].get<std::string>(), j["mos"].get<double>(), std::nullopt};
        if (j.contains("raw_score")) {
            if (!j["raw_score"].is_number()) fail(ErrorKind::format, where + ": raw_score must be numeric");
            rec.raw_score = j["raw_score"].get<double>();
        }
        if (!(rec.mos >= 1.0 && rec.mos <= 5.0))
            fail(ErrorKind::data, where + ": mos " + std::to_string(rec.mos) + " outside [1,5]");
        out.push_back(std::move(rec));
    }
    return out;
}

void write_sidecar(const fs::path& path, std::span<const SidecarRecord> records) {
    std::string out;
    for (const auto& r : records) {
        json j = {{"id", r.id}, {"mos", r.mos}};
        if (r.raw_score) j["raw_score"] = *r.raw_score;
        out += j.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

Checkpoint read_checkpoint(const fs::path& path) {
    const std::string bytes = read_file(path);
    Reader r(bytes, path.string());
    r.magic(kCheckpointMagic);
    const std::uint32_t version = r.u32("version");
    if (version != kFormatVersion)
        fail(ErrorKind::format, path.string() + ": unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32("count");
    const std::uint32_t dim = r.u32("dim");
    const std::uint32_t activation = r.u32("activation");
    if (activation > 1) fail(ErrorKind::format, path.string() + ": unknown activation code");
    const std::uint32_t n_sizes = r.u32("layer count");
    if (n_sizes < 2 || n_sizes > 64) fail(ErrorKind::format, path.string() + ": implausible layer count");
    std::vector<std::size_t> sizes(n_sizes);
    for (auto& s : sizes) {
        s = r.u32("layer size");
        if (s == 0) fail(ErrorKind::format, path.string() + ": zero layer size");
    }
    const std::uint32_t has_head = r.u32("head flag");
    if (has_head > 1) fail(ErrorKind::format, path.string() + ": bad head flag");

    std::uint64_t floats = 0;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) floats += static_cast<std::uint64_t>(sizes[k]) * sizes[k + 1] + sizes[k + 1];
    if (has_head) floats += sizes.back() + 1;
    if (count != 1 || dim != floats)
        fail(ErrorKind::corruption, path.string() + ": header declares " + std::to_string(count) + "x" +
                                        std::to_string(dim) + " floats, layer shapes imply 1x" +
                                        std::to_string(floats));
    check_payload(r, floats);

    Checkpoint ckpt;
    ckpt.encoder.activation = activation == 0 ? Activation::tanh : Activation::relu;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
        DenseLayer l{Matrix(sizes[k + 1], sizes[k]), Vec(sizes[k + 1])};
        for (auto& v : l.weight.flat()) v = r.f32();
        for (auto& v : l.bias) v = r.f32();
        ckpt.encoder.layers.push_back(std::move(l));
    }
    if (has_head) {
        RegressionHead head{Vec(sizes.back()), 0.0};
        for (auto& v : head.weight) v = r.f32();
        head.bias = r.f32();
        ckpt.head = std::move(head);
    }
    ckpt.encoder.validate();
    return ckpt;
}

void write_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    ckpt.encoder.validate();
    const auto sizes = ckpt.encoder.layer_sizes();
    std::uint64_t floats = ckpt.encoder.parameter_count();
    if (ckpt.head) {
        if (ckpt.head->weight.size() != ckpt.encoder.output_dim())
            fail(ErrorKind::shape, "write_checkpoint: head dim does not match encoder output");
        floats += ckpt.head->weight.size() + 1;
    }
    std::string out(kCheckpointMagic, 4);
    put_u32(out, kFormatVersion);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(floats));
    put_u32(out, ckpt.encoder.activation == Activation::tanh ? 0 : 1);
    put_u32(out, static_cast<std::uint32_t>(sizes.size()));
    for (std::size_t s : sizes) put_u32(out, static_cast<std::uint32_t>(s));
    put_u32(out, ckpt.head ? 1 : 0);
    for (const auto t : ckpt.encoder.tensors())
        for (double v : t) put_f32(out, v);
    if (ckpt.head) {
        for (double v : ckpt.head->weight) put_f32(out, v);
        put_f32(out, ckpt.head->bias);
    }
    write_file_atomic(path, out);
}

PromptBank read_bank(const fs::path& iqeb_path, std::optional<double> temperature_override) {
    const auto rows = read_embeddings(iqeb_path);
    if (rows.size() != kNumLevels)
        fail(ErrorKind::data, iqeb_path.string() + ": prompt bank needs 5 rows, file has " +
                                  std::to_string(rows.size()));
    Matrix text(kNumLevels, rows.front().dim());
    for (std::size_t i = 0; i < kNumLevels; ++i)
        for (std::size_t j = 0; j < text.cols(); ++j) text(i, j) = rows[i].values[j];

    double tau = kDefaultTemperature;
    const fs::path meta = bank_meta_path(iqeb_path);
    if (fs::exists(meta)) {
        json j;
        try {
            j = json::parse(read_file(meta));
        } catch (const json::exception& e) {
            fail(ErrorKind::format, meta.string() + ": " + e.what());
        }
        if (j.contains("temperature")) {
            if (!j["temperature"].is_number()) fail(ErrorKind::format, meta.string() + ": temperature must be numeric");
            tau = j["temperature"].get<double>();
        }
        if (j.contains("levels")) {
            const auto& levels = j["levels"];
            bool ok = levels.is_array() && levels.size() == kNumLevels;
            for (std::size_t i = 0; ok && i < kNumLevels; ++i)
                ok = levels[i].is_string() && levels[i].get<std::string>() == kLevelNames[i];
            if (!ok) fail(ErrorKind::data, meta.string() + ": levels must be bad, poor, fair, good, perfect in order");
        }
    }
    if (temperature_override) tau = *temperature_override;
    try {
        return PromptBank(std::move(text), tau);
    } catch (const Error& e) {
        fail(ErrorKind::data, iqeb_path.string() + ": " + e.what());
    }
}

void write_bank(const fs::path& dir, const PromptBank& bank) {
    std::vector<Embedding> rows;
    for (std::size_t i = 0; i < kNumLevels; ++i) {
        const auto r = bank.row(i);
        rows.emplace_back(Vec(r.begin(), r.end()));
    }
    write_embeddings(dir / "bank.iqeb", rows);
    json meta;
    meta["temperature"] = bank.temperature();
    meta["dim"] = bank.dim();
    meta["levels"] = json::array();
    meta["prompts"] = json::array();
    for (std::size_t i = 0; i < kNumLevels; ++i) {
        meta["levels"].push_back(std::string(kLevelNames[i]));
        meta["prompts"].push_back(level_prompt(i));
    }
    write_file_atomic(dir / "bank.json", meta.dump(2) + "\n");
}

void write_dataset(const fs::path& dir, const Dataset& ds, const PromptBank& bank) {
    ds.validate();
    std::vector<Embedding> obs;
    std::vector<SidecarRecord> recs;
    for (const auto& s : ds.samples) {
        obs.emplace_back(s.obs);
        recs.push_back({s.id, s.mos, std::nullopt});
    }
    write_embeddings(dir / "observations.iqeb", obs);
    write_sidecar(dir / "scores.jsonl", recs);
    write_bank(dir, bank);
    json meta = {{"provenance", ds.provenance == Provenance::synthetic ? "synthetic" : "imported"},
                 {"seed", ds.seed},
                 {"n", ds.size()},
                 {"obs_dim", ds.obs_dim}};
    write_file_atomic(dir / "dataset.json", meta.dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
    const auto obs = read_embeddings(dir / "observations.iqeb");
    const auto recs = read_sidecar(dir / "scores.jsonl");
    if (obs.size() != recs.size())
        fail(ErrorKind::data, dir.string() + ": " + std::to_string(obs.size()) + " observations but " +
                                  std::to_string(recs.size()) + " score records");
    Dataset ds;
    ds.provenance = Provenance::imported;
    ds.obs_dim = obs.empty() ? 0 : obs.front().dim();
    for (std::size_t i = 0; i < obs.size(); ++i) ds.samples.push_back({recs[i].id, obs[i].values, recs[i].mos});
    if (fs::exists(dir / "dataset.json")) {
        try {
            const json meta = json::parse(read_file(dir / "dataset.json"));
            if (meta.value("provenance", "imported") == "synthetic") ds.provenance = Provenance::synthetic;
            ds.seed = meta.value("seed", 0ULL);
        } catch (const json::exception& e) {
            fail(ErrorKind::format, (dir / "dataset.json").string() + ": " + e.what());
        }
    }
    ds.validate();
    return ds;
}

PromptBank read_dataset_bank(const fs::path& dir, std::optional<double> temperature_override) {
    return read_bank(dir / "bank.iqeb", temperature_override);
}

}  // namespace kdiqa::io
