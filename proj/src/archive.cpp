#include "deepgin/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "deepgin/errors.hpp"

namespace deepgin {
namespace {

constexpr char kMagic[8] = {'D', 'E', 'E', 'P', 'G', 'I', 'N', '\0'};

static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian");

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& b) : buf_(b) {}

  template <typename T>
  T pod() {
    T v;
    need(sizeof v);
    std::memcpy(&v, buf_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError("archive truncated at byte " + std::to_string(pos_));
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

std::string metadata_text(const std::map<std::string, std::string>& md) {
  std::string out;
  for (const auto& [k, v] : md) out += k + "=" + v + "\n";
  return out;
}

std::map<std::string, std::string> parse_metadata(const std::string& text) {
  std::map<std::string, std::string> md;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad archive metadata line: " + line);
    md[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return md;
}

}  // namespace

const ArchiveTensor* ArchiveGroup::find(const std::string& tensor) const {
  for (const auto& t : tensors) {
    if (t.name == tensor) return &t;
  }
  return nullptr;
}

const ArchiveGroup* Archive::find(const std::string& name) const {
  for (const auto& g : groups) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

ArchiveGroup& Archive::group(const std::string& name) {
  for (auto& g : groups) {
    if (g.name == name) return g;
  }
  groups.push_back({name, {}});
  return groups.back();
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  std::uint64_t h = seed;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

std::string serialize_archive(const Archive& a) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.pod(Archive::kVersion);
  w.pod(a.fingerprint);
  w.str(metadata_text(a.metadata));
  w.pod(static_cast<std::uint32_t>(a.groups.size()));
  for (const auto& g : a.groups) {
    w.str(g.name);
    w.pod(static_cast<std::uint32_t>(g.tensors.size()));
    for (const auto& t : g.tensors) {
      if (nn::shape_numel(t.shape) != t.values.size()) {
        throw ArgumentError("archive tensor " + g.name + "/" + t.name + " has inconsistent shape");
      }
      w.str(t.name);
      w.pod(static_cast<std::uint32_t>(t.shape.size()));
      for (int d : t.shape) w.pod(static_cast<std::int64_t>(d));
      w.raw(t.values.data(), t.values.size() * sizeof(double));
    }
  }
  const std::uint64_t sum = fnv1a(w.buffer().data(), w.buffer().size());
  w.pod(sum);
  return std::move(w.buffer());
}

Archive parse_archive(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a deepgin archive (bad magic)");
  }
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (fnv1a(bytes.data(), bytes.size() - 8) != stored) {
    throw FormatError("archive checksum mismatch (file corrupt or truncated)");
  }
  const std::string body = bytes.substr(0, bytes.size() - 8);
  Reader r(body);
  char magic[8];
  r.raw(magic, sizeof magic);
  const auto version = r.pod<std::uint32_t>();
  if (version != Archive::kVersion) {
    throw FormatError("unsupported archive version " + std::to_string(version));
  }
  Archive a;
  a.fingerprint = r.pod<std::uint64_t>();
  a.metadata = parse_metadata(r.str());
  const auto n_groups = r.pod<std::uint32_t>();
  for (std::uint32_t gi = 0; gi < n_groups; ++gi) {
    ArchiveGroup g;
    g.name = r.str();
    const auto n_tensors = r.pod<std::uint32_t>();
    for (std::uint32_t ti = 0; ti < n_tensors; ++ti) {
      ArchiveTensor t;
      t.name = r.str();
      const auto ndim = r.pod<std::uint32_t>();
      if (ndim > 8) throw FormatError("archive tensor " + t.name + " has too many dims");
      for (std::uint32_t d = 0; d < ndim; ++d) {
        const auto dim = r.pod<std::int64_t>();
        if (dim < 0 || dim > (1 << 30)) throw FormatError("archive tensor " + t.name + " has bad dim");
        t.shape.push_back(static_cast<int>(dim));
      }
      t.values.resize(nn::shape_numel(t.shape));
      r.raw(t.values.data(), t.values.size() * sizeof(double));
      g.tensors.push_back(std::move(t));
    }
    a.groups.push_back(std::move(g));
  }
  if (r.pos() != body.size()) throw FormatError("trailing bytes in archive");
  return a;
}

void save_archive(const Archive& a, const std::filesystem::path& path) {
  const std::string bytes = serialize_archive(a);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Archive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_archive(ss.str());
}

}  // namespace deepgin
