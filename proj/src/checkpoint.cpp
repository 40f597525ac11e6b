#include "pdqa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace pdqa {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'Q', 'A'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32() {
    check(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    check(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string string() {
    const std::uint32_t len = u32();
    check(len);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + len));
    pos_ += len;
    return s;
  }

  void raw(void* dst, std::size_t n) {
    check(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void check(std::size_t n) {
    if (pos_ + n > bytes_.size())
      throw std::runtime_error("checkpoint: truncated file");
  }
  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void append_tensor(std::vector<std::uint8_t>& out, const std::string& name,
                   const Tensor& t) {
  put_string(out, name);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u64(out, d);
  for (Eigen::Index i = 0; i < t.values().size(); ++i)
    put_f64(out, t.values()[i]);
}

std::vector<std::pair<std::string, Tensor>> model_tensors(const Model& model) {
  auto tensors = model.backbone.named_tensors();
  for (auto& entry : trainable_parameters(model.bank))
    tensors.push_back(std::move(entry));
  return tensors;
}

}  // namespace

std::vector<std::uint8_t> serialize_tensors(
    const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::vector<std::uint8_t> out;
  put_u64(out, tensors.size());
  for (const auto& [name, tensor] : tensors) append_tensor(out, name, tensor);
  return out;
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);

  const ModelConfig& c = model.config;
  put_u64(out, c.k_layers);
  put_u64(out, c.d_model);
  put_u64(out, c.n_heads);
  put_u64(out, c.d_mlp);
  put_u64(out, c.patch_pixels);
  put_u64(out, c.image_side_local);
  put_u64(out, c.image_side_global);
  put_u64(out, c.resolved_vocab_size());
  put_u64(out, c.max_text_len);
  put_u64(out, c.prompt_len);
  put_u64(out, c.resolved_d_prompt());
  out.push_back(c.use_global_stream ? 1 : 0);
  put_f64(out, c.layer_norm_eps);

  out.push_back(static_cast<std::uint8_t>(model.mode));
  put_string(out, model.prompts.positive);
  put_string(out, model.prompts.negative);

  const auto table = serialize_tensors(model_tensors(model));
  out.insert(out.end(), table.begin(), table.end());

  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("save_checkpoint: cannot open " + path);
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)),
                                  std::istreambuf_iterator<char>());
  Reader in(std::move(bytes));

  char magic[4];
  in.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("load_checkpoint: " + path +
                             " is not a PDQA checkpoint");
  const std::uint32_t version = in.u32();
  if (version != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));

  ModelConfig c;
  c.k_layers = in.u64();
  c.d_model = in.u64();
  c.n_heads = in.u64();
  c.d_mlp = in.u64();
  c.patch_pixels = in.u64();
  c.image_side_local = in.u64();
  c.image_side_global = in.u64();
  c.vocab_size = in.u64();
  c.max_text_len = in.u64();
  c.prompt_len = in.u64();
  c.d_prompt = in.u64();
  std::uint8_t flag = 0;
  in.raw(&flag, 1);
  c.use_global_stream = flag != 0;
  c.layer_norm_eps = in.f64();

  std::uint8_t mode_byte = 0;
  in.raw(&mode_byte, 1);
  if (mode_byte > static_cast<std::uint8_t>(PromptMode::kBoth))
    throw std::runtime_error("load_checkpoint: bad prompt mode byte");

  Model model;
  model.config = c;
  model.mode = static_cast<PromptMode>(mode_byte);
  model.prompts.positive = in.string();
  model.prompts.negative = in.string();
  model.backbone = init_backbone(c, 0);
  model.bank = init_prompt_bank(c, 0, model.mode);

  std::map<std::string, Tensor> expected;
  for (auto& [name, tensor] : model_tensors(model)) expected.emplace(name, tensor);

  const std::uint64_t count = in.u64();
  if (count != expected.size())
    throw std::runtime_error(
        "load_checkpoint: tensor count mismatch: file has " +
        std::to_string(count) + ", model needs " +
        std::to_string(expected.size()));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = in.string();
    const auto it = expected.find(name);
    if (it == expected.end())
      throw std::runtime_error("load_checkpoint: unexpected tensor " + name);
    Tensor tensor = it->second;
    const std::uint32_t rank = in.u32();
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = in.u64();
    if (shape != tensor.shape())
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name +
                               ": file " + shape_to_string(shape) + ", model " +
                               shape_to_string(tensor.shape()));
    for (std::size_t v = 0; v < tensor.size(); ++v)
      tensor.values_mut()[static_cast<Eigen::Index>(v)] = in.f64();
    expected.erase(it);
  }
  if (!expected.empty())
    throw std::runtime_error("load_checkpoint: missing tensor " +
                             expected.begin()->first);
  if (!in.done())
    throw std::runtime_error("load_checkpoint: trailing bytes in " + path);
  return model;
}

}  // namespace pdqa
