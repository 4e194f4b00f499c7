#include "gridner/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace gridner {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'N', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw error("truncated checkpoint: " + path);
    return v;
}
std::uint64_t read_u64(std::istream& in, const std::string& path) {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw error("truncated checkpoint: " + path);
    return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open checkpoint for writing: " + path.string());

    json header;
    header["embed_dim"] = ckpt.config.embed_dim;
    header["lstm_hidden"] = ckpt.config.lstm_hidden;
    header["d_prime"] = ckpt.config.query_width();
    header["dropout_rate"] = ckpt.config.dropout_rate;
    header["num_labels"] = ckpt.config.num_labels;
    header["vocab_size"] = ckpt.config.vocab_size;
    header["external_vectors"] = ckpt.config.external_vectors;
    header["entity_types"] = ckpt.labels.entity_types();
    header["vocab"] = ckpt.vocab.tokens();
    const std::string header_text = header.dump();

    out.write(kMagic, sizeof kMagic);
    write_u32(out, kVersion);
    write_u64(out, header_text.size());
    out.write(header_text.data(), std::streamsize(header_text.size()));

    const auto named = ckpt.params.named();
    write_u64(out, named.size());
    for (const auto& [name, tensor] : named) {
        write_u64(out, name.size());
        out.write(name.data(), std::streamsize(name.size()));
        write_u32(out, std::uint32_t(tensor->rank()));
        for (auto dim : tensor->shape()) write_u64(out, dim);
        out.write(reinterpret_cast<const char*>(tensor->value().data()),
                  std::streamsize(tensor->size() * sizeof(double)));
    }
    if (!out) throw error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open checkpoint: " + path.string());

    char magic[4];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw error("not a checkpoint file: " + path.string());
    const std::uint32_t version = read_u32(in, path.string());
    if (version != kVersion)
        throw error("unsupported checkpoint version " + std::to_string(version));

    const std::uint64_t header_len = read_u64(in, path.string());
    std::string header_text(header_len, '\0');
    if (!in.read(header_text.data(), std::streamsize(header_len)))
        throw error("truncated checkpoint: " + path.string());
    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& err) {
        throw error("corrupt checkpoint header: " + std::string(err.what()));
    }

    Checkpoint ckpt;
    ckpt.config.embed_dim = header.at("embed_dim").get<int>();
    ckpt.config.lstm_hidden = header.at("lstm_hidden").get<int>();
    ckpt.config.d_prime = header.at("d_prime").get<int>();
    ckpt.config.dropout_rate = header.at("dropout_rate").get<double>();
    ckpt.config.num_labels = header.at("num_labels").get<int>();
    ckpt.config.vocab_size = header.at("vocab_size").get<int>();
    ckpt.config.external_vectors = header.at("external_vectors").get<bool>();
    ckpt.labels = LabelSet(header.at("entity_types").get<std::vector<std::string>>());
    ckpt.vocab = Vocabulary::from_tokens(header.at("vocab").get<std::vector<std::string>>());

    std::map<std::string, Tensor> entries;
    const std::uint64_t count = read_u64(in, path.string());
    for (std::uint64_t e = 0; e < count; ++e) {
        const std::uint64_t name_len = read_u64(in, path.string());
        std::string name(name_len, '\0');
        if (!in.read(name.data(), std::streamsize(name_len)))
            throw error("truncated checkpoint: " + path.string());
        const std::uint32_t rank = read_u32(in, path.string());
        Shape shape(rank);
        for (auto& dim : shape) dim = read_u64(in, path.string());
        std::vector<double> data(shape_size(shape));
        if (!in.read(reinterpret_cast<char*>(data.data()),
                     std::streamsize(data.size() * sizeof(double))))
            throw error("truncated checkpoint: " + path.string());
        entries.emplace(name, Tensor::from(std::move(shape), std::move(data), true));
    }

    std::mt19937_64 scratch_rng(0);
    ckpt.params = init_params(ckpt.config, scratch_rng);
    for (auto& [name, tensor] : ckpt.params.named()) {
        auto it = entries.find(name);
        if (it == entries.end())
            throw error("checkpoint is missing parameter " + name);
        if (it->second.shape() != tensor->shape())
            throw error("checkpoint parameter " + name + " has shape " +
                        shape_text(it->second.shape()) + ", expected " +
                        shape_text(tensor->shape()));
        *tensor = it->second;
        entries.erase(it);
    }
    if (!entries.empty())
        throw error("checkpoint has unexpected parameter " + entries.begin()->first);
    return ckpt;
}

}  // namespace gridner
