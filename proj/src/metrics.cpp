#include "deepgin/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>

#include "deepgin/datapipe.hpp"
#include "deepgin/errors.hpp"
#include "deepgin/png_io.hpp"

namespace deepgin {
namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
    throw ArgumentError(std::string(what) + ": image sizes differ");
  }
  if (a.empty()) throw ArgumentError(std::string(what) + ": empty image");
}

std::array<double, kWin> gaussian_taps() {
  std::array<double, kWin> g{};
  double total = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid-mode separable Gaussian filter of one plane.
std::vector<double> filter_valid(const double* src, int h, int w, const std::array<double, kWin>& g) {
  const int oh = h - kWin + 1, ow = w - kWin + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * src[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double psnr(const ImageTensor& a, const ImageTensor& b) {
  require_same(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageTensor& a, const ImageTensor& b) {
  require_same(a, b, "ssim");
  const int h = a.height(), w = a.width();
  if (h < kWin || w < kWin) throw ArgumentError("ssim: image smaller than the 11x11 window");
  const auto g = gaussian_taps();
  const std::size_t plane = a.plane_size();
  std::vector<double> aa(plane), bb(plane), ab(plane);
  double total = 0;
  for (int c = 0; c < a.channels(); ++c) {
    const double* pa = a.data().data() + c * plane;
    const double* pb = b.data().data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, h, w, g);
    const auto mu_b = filter_valid(pb, h, w, g);
    const auto e_aa = filter_valid(aa.data(), h, w, g);
    const auto e_bb = filter_valid(bb.data(), h, w, g);
    const auto e_ab = filter_valid(ab.data(), h, w, g);
    double acc = 0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i];
      const double vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2 * mu_a[i] * mu_b[i] + kC1) * (2 * cov + kC2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
      acc += num / den;
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / a.channels();
}

double mean_l1_pct(const ImageTensor& a, const ImageTensor& b) {
  require_same(a, b, "mean_l1_pct");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a.data()[i] - b.data()[i]);
  return 100.0 * acc / static_cast<double>(a.size());
}

EvalRow evaluate_pair(const std::string& name, const ImageTensor& completed, const ImageTensor& gt) {
  return {name, psnr(completed, gt), ssim(completed, gt), mean_l1_pct(completed, gt)};
}

EvalReport make_report(std::vector<EvalRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const EvalRow& x, const EvalRow& y) { return x.name < y.name; });
  EvalReport r;
  r.aggregate.name = "AGGREGATE";
  for (const auto& row : rows) {
    r.aggregate.psnr += row.psnr;
    r.aggregate.ssim += row.ssim;
    r.aggregate.l1_pct += row.l1_pct;
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    r.aggregate.psnr /= n;
    r.aggregate.ssim /= n;
    r.aggregate.l1_pct /= n;
  }
  r.rows = std::move(rows);
  return r;
}

std::string EvalReport::to_csv() const {
  auto line = [](const EvalRow& r) {
    return r.name + "," + fmt(r.psnr) + "," + fmt(r.ssim) + "," + fmt(r.l1_pct) + "\n";
  };
  std::string out = "name,psnr,ssim,l1_pct\n";
  for (const auto& row : rows) out += line(row);
  return out + line(aggregate);
}

std::string EvalReport::to_text() const {
  std::size_t width = aggregate.name.size();
  for (const auto& row : rows) width = std::max(width, row.name.size());
  auto line = [&](const std::string& a, const std::string& b, const std::string& c, const std::string& d) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%-*s  %10s  %10s  %10s\n", static_cast<int>(width), a.c_str(),
                  b.c_str(), c.c_str(), d.c_str());
    return std::string(buf);
  };
  std::string out = line("name", "psnr", "ssim", "l1_pct");
  for (const auto& row : rows) out += line(row.name, fmt(row.psnr), fmt(row.ssim), fmt(row.l1_pct));
  out += line(aggregate.name, fmt(aggregate.psnr), fmt(aggregate.ssim), fmt(aggregate.l1_pct));
  return out;
}

EvalReport evaluate_dataset(const std::filesystem::path& completed_dir,
                            const std::filesystem::path& gt_dir) {
  for (const auto& d : {completed_dir, gt_dir}) {
    if (!std::filesystem::is_directory(d)) throw IoError("not a directory: " + d.string());
  }
  std::map<std::string, std::filesystem::path> done, gt;
  for (const auto& p : list_png_files(completed_dir)) done[p.filename().string()] = p;
  for (const auto& p : list_png_files(gt_dir)) gt[p.filename().string()] = p;
  std::string unpaired;
  for (const auto& [name, p] : done) {
    if (!gt.count(name)) unpaired += "\n  only in " + completed_dir.string() + ": " + name;
  }
  for (const auto& [name, p] : gt) {
    if (!done.count(name)) unpaired += "\n  only in " + gt_dir.string() + ": " + name;
  }
  if (!unpaired.empty()) throw ArgumentError("unpaired files:" + unpaired);
  std::vector<EvalRow> rows;
  for (const auto& [name, p] : done) rows.push_back(evaluate_pair(name, load_png(p), load_png(gt[name])));
  return make_report(std::move(rows));
}

}  // namespace deepgin
