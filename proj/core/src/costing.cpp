#include "maxim/costing.hpp"

#include <iomanip>
#include <sstream>

namespace maxim {

void CostCounter::leaf(const std::string& scope, uint64_t macs, uint64_t extra) {
  uint64_t params = 0;
  for (int64_t i = 0; i < store_->count(); ++i) {
    const std::string& n = store_->name(ParamId{static_cast<int32_t>(i)});
    if (n.size() > scope.size() && n.compare(0, scope.size(), scope) == 0 &&
        n[scope.size()] == '/')
      params += static_cast<uint64_t>(store_->value(i).numel());
  }
  rows_.push_back(CostRow{scope, params, macs, extra});
}

void CostCounter::more(uint64_t macs, uint64_t extra) {
  if (rows_.empty()) throw Error("CostCounter::more without an open leaf");
  rows_.back().macs += macs;
  rows_.back().extra += extra;
}

CostReport CostCounter::finish(int64_t h, int64_t w) const {
  CostReport r;
  r.rows = rows_;
  r.eval_h = h;
  r.eval_w = w;
  for (const CostRow& row : r.rows) {
    r.total_params += row.params;
    r.total_macs += row.macs;
    r.total_extra += row.extra;
  }
  return r;
}

namespace {
std::string human(uint64_t v) {
  std::ostringstream os;
  os << std::fixed;
  if (v >= 1000000000ull)
    os << std::setprecision(2) << static_cast<double>(v) / 1e9 << "G";
  else if (v >= 1000000ull)
    os << std::setprecision(2) << static_cast<double>(v) / 1e6 << "M";
  else if (v >= 1000ull)
    os << std::setprecision(2) << static_cast<double>(v) / 1e3 << "K";
  else
    os << v;
  return os.str();
}
}  // namespace

std::string CostReport::table() const {
  size_t name_w = 5;
  for (const CostRow& r : rows) name_w = std::max(name_w, r.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "layer" << std::right
     << std::setw(14) << "params" << std::setw(18) << "flops" << "\n";
  for (const CostRow& r : rows)
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << r.name << std::right
       << std::setw(14) << r.params << std::setw(18) << r.flops_mac2() << "\n";
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "total" << std::right
     << std::setw(14) << total_params << std::setw(18) << flops_mac2() << "\n";
  os << "evaluated at " << eval_h << "x" << eval_w << ": params " << human(total_params) << ", "
     << human(flops_mac2()) << " flops (multiply-accumulate = 2 flops); "
     << human(flops_mac1()) << " flops under MAC=1\n";
  return os.str();
}

std::string CostReport::csv() const {
  std::ostringstream os;
  os << "name,params,flops\n";
  for (const CostRow& r : rows) os << r.name << "," << r.params << "," << r.flops_mac2() << "\n";
  os << "total," << total_params << "," << flops_mac2() << "\n";
  return os.str();
}

uint64_t mab_flops(int64_t h, int64_t w, int64_t c, int64_t b, int64_t d) {
  uint64_t hw = static_cast<uint64_t>(h) * static_cast<uint64_t>(w);
  uint64_t uc = static_cast<uint64_t>(c);
  return static_cast<uint64_t>(b) * b * hw * uc + static_cast<uint64_t>(d) * d * hw * uc +
         10ull * hw * uc * uc;
}

}  // namespace maxim
