#include "gfsr/checkpoint.hpp"

#include <charconv>

#include "gfsr/error.hpp"
#include "gfsr/fileio.hpp"
#include "gfsr/tensor_io.hpp"

namespace gfsr {

namespace {

constexpr std::string_view kMagic = "GFSRCKPT";

class Cursor {
 public:
  explicit Cursor(std::string_view bytes) : bytes_(bytes) {}

  std::string_view line() {
    const auto end = bytes_.find('\n', pos_);
    if (end == std::string_view::npos) fail_data("checkpoint: checksum error (truncated header)");
    auto out = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }

  std::size_t keyed_count(std::string_view key) {
    const auto l = line();
    if (l.substr(0, key.size()) != key || l.size() <= key.size() + 1 || l[key.size()] != ' ') {
      fail_data("checkpoint: expected '" + std::string(key) + "' line");
    }
    std::size_t v = 0;
    const auto digits = l.substr(key.size() + 1);
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc() || p != digits.data() + digits.size()) {
      fail_data("checkpoint: malformed '" + std::string(key) + "' count");
    }
    return v;
  }

  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) fail_data("checkpoint: checksum error (truncated)");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::string_view bytes() const { return bytes_; }
  std::size_t& pos() { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Network& net) {
  net.check_consistent();
  const std::string arch = net.arch.to_text();
  std::string out = std::string(kMagic) + " " + std::to_string(kCheckpointVersion) + "\n";
  out += "arch " + std::to_string(arch.size()) + "\n" + arch;
  std::size_t count = 0;
  for (const auto& p : net.params) count += p.empty() ? 0 : 2;
  out += "tensors " + std::to_string(count) + "\n";
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    if (net.params[i].empty()) continue;
    const auto& name = net.arch.layers[i].name;
    out += name + ".weight\n" + encode_tensor(net.params[i].weight);
    out += name + ".bias\n" + encode_tensor(net.params[i].bias);
  }
  return out;
}

Network decode_checkpoint(std::string_view bytes) {
  Cursor cur(bytes);
  const auto head = cur.line();
  if (head.substr(0, kMagic.size()) != kMagic) fail_data("checkpoint: bad magic");
  if (head != std::string(kMagic) + " " + std::to_string(kCheckpointVersion)) {
    fail_data("checkpoint: version mismatch ('" + std::string(head) + "')");
  }
  Network net;
  net.arch = ArchSpec::parse(cur.take(cur.keyed_count("arch")));
  net.params.resize(net.arch.layers.size());
  const std::size_t count = cur.keyed_count("tensors");
  for (std::size_t t = 0; t < count; ++t) {
    const std::string name(cur.line());
    const auto dot = name.rfind('.');
    if (dot == std::string::npos) fail_data("checkpoint: malformed tensor name '" + name + "'");
    const std::size_t li = net.arch.layer_index(name.substr(0, dot));
    auto tensor = decode_tensor_at<float>(cur.bytes(), cur.pos());
    const auto role = name.substr(dot + 1);
    if (role == "weight") {
      net.params[li].weight = std::move(tensor);
    } else if (role == "bias") {
      net.params[li].bias = std::move(tensor);
    } else {
      fail_data("checkpoint: unknown tensor role '" + name + "'");
    }
  }
  if (cur.pos() != bytes.size()) fail_data("checkpoint: trailing bytes");
  net.check_consistent();
  return net;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(net));
}

Network load_checkpoint(const std::filesystem::path& path, const std::optional<ArchSpec>& expected) {
  Network net;
  try {
    net = decode_checkpoint(read_file(path));
  } catch (const Error& e) {
    fail_data(path.string() + ": " + e.what());
  }
  if (expected && !(net.arch == *expected)) {
    fail_data(path.string() + ": checkpoint architecture mismatch");
  }
  return net;
}

}  // namespace gfsr
