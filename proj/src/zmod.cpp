#include "trackhom/zmod.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>

namespace trackhom {

// ----- dense matrices -----

IntMatrix IntMatrix::identity(int n) {
  IntMatrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1;
  return m;
}

IntMatrix IntMatrix::mul(const IntMatrix& o) const {
  if (cols != o.rows) throw Error(ErrCode::internal, "matrix shape mismatch in mul");
  IntMatrix r(rows, o.cols);
  for (int i = 0; i < rows; ++i)
    for (int k = 0; k < cols; ++k) {
      const Integer& v = at(i, k);
      if (v == 0) continue;
      for (int j = 0; j < o.cols; ++j) {
        const Integer& w = o.at(k, j);
        if (w != 0) r.at(i, j) += v * w;
      }
    }
  return r;
}

namespace {

void row_axpy(IntMatrix& m, int dst, int src, const Integer& k) {
  for (int j = 0; j < m.cols; ++j)
    if (m.at(src, j) != 0) m.at(dst, j) += k * m.at(src, j);
}

void col_axpy(IntMatrix& m, int dst, int src, const Integer& k) {
  for (int i = 0; i < m.rows; ++i)
    if (m.at(i, src) != 0) m.at(i, dst) += k * m.at(i, src);
}

void row_swap(IntMatrix& m, int i, int j) {
  if (i == j) return;
  for (int c = 0; c < m.cols; ++c) std::swap(m.at(i, c), m.at(j, c));
}

void col_swap(IntMatrix& m, int i, int j) {
  if (i == j) return;
  for (int r = 0; r < m.rows; ++r) std::swap(m.at(r, i), m.at(r, j));
}

// rows i, j replaced by (x*i + y*j, p*i + q*j); caller keeps det(x q - y p) = +-1
void row_combine(IntMatrix& m, int i, int j, const Integer& x, const Integer& y, const Integer& p,
                 const Integer& q) {
  for (int c = 0; c < m.cols; ++c) {
    Integer a = m.at(i, c), b = m.at(j, c);
    m.at(i, c) = x * a + y * b;
    m.at(j, c) = p * a + q * b;
  }
}

void col_combine(IntMatrix& m, int i, int j, const Integer& x, const Integer& y, const Integer& p,
                 const Integer& q) {
  for (int r = 0; r < m.rows; ++r) {
    Integer a = m.at(r, i), b = m.at(r, j);
    m.at(r, i) = x * a + y * b;
    m.at(r, j) = p * a + q * b;
  }
}

Integer int_abs(const Integer& v) { return v < 0 ? Integer(-v) : v; }

}  // namespace

SnfResult smith_normal_form(const IntMatrix& m0) {
  SnfResult res;
  res.d = m0;
  res.u = IntMatrix::identity(m0.rows);
  res.v = IntMatrix::identity(m0.cols);
  IntMatrix& d = res.d;
  IntMatrix& u = res.u;
  IntMatrix& v = res.v;

  int t = 0;
  int lim = std::min(d.rows, d.cols);
  while (t < lim) {
    // pivot: smallest nonzero magnitude in the remaining block
    int pr = -1, pc = -1;
    Integer best = 0;
    for (int i = t; i < d.rows && best != 1; ++i)
      for (int j = t; j < d.cols; ++j) {
        if (d.at(i, j) == 0) continue;
        Integer a = int_abs(d.at(i, j));
        if (pr < 0 || a < best) {
          pr = i;
          pc = j;
          best = a;
          if (best == 1) break;
        }
      }
    if (pr < 0) break;
    row_swap(d, t, pr);
    row_swap(u, t, pr);
    col_swap(d, t, pc);
    col_swap(v, t, pc);

    bool clean = false;
    while (!clean) {
      clean = true;
      for (int i = t + 1; i < d.rows; ++i) {
        if (d.at(i, t) == 0) continue;
        Integer q = d.at(i, t) / d.at(t, t);
        if (q != 0) {
          row_axpy(d, i, t, -q);
          row_axpy(u, i, t, -q);
        }
        if (d.at(i, t) != 0) {
          row_swap(d, t, i);
          row_swap(u, t, i);
          clean = false;
        }
      }
      if (!clean) continue;
      for (int j = t + 1; j < d.cols; ++j) {
        if (d.at(t, j) == 0) continue;
        Integer q = d.at(t, j) / d.at(t, t);
        if (q != 0) {
          col_axpy(d, j, t, -q);
          col_axpy(v, j, t, -q);
        }
        if (d.at(t, j) != 0) {
          col_swap(d, t, j);
          col_swap(v, t, j);
          clean = false;
        }
      }
    }
    if (d.at(t, t) < 0) {
      for (int j = 0; j < d.cols; ++j) d.at(t, j) = -d.at(t, j);
      for (int j = 0; j < u.cols; ++j) u.at(t, j) = -u.at(t, j);
    }
    ++t;
  }

  // divisibility chain on the diagonal
  bool changed = true;
  while (changed) {
    changed = false;
    for (int i = 0; i + 1 < t; ++i) {
      Integer a = d.at(i, i), b = d.at(i + 1, i + 1);
      if (b % a == 0) continue;
      changed = true;
      Integer x, y;
      Integer g = ext_gcd(a, b, x, y);
      // fold column i+1 into column i, then restore diagonal form
      col_axpy(d, i, i + 1, 1);
      col_axpy(v, i, i + 1, 1);
      row_combine(d, i, i + 1, x, y, -(b / g), a / g);
      row_combine(u, i, i + 1, x, y, -(b / g), a / g);
      Integer r = d.at(i, i + 1) / g;
      if (r != 0) {
        col_axpy(d, i + 1, i, -r);
        col_axpy(v, i + 1, i, -r);
      }
      if (d.at(i, i) < 0) {
        for (int j = 0; j < d.cols; ++j) d.at(i, j) = -d.at(i, j);
        for (int j = 0; j < u.cols; ++j) u.at(i, j) = -u.at(i, j);
      }
      if (d.at(i + 1, i + 1) < 0) {
        for (int j = 0; j < d.cols; ++j) d.at(i + 1, j) = -d.at(i + 1, j);
        for (int j = 0; j < u.cols; ++j) u.at(i + 1, j) = -u.at(i + 1, j);
      }
    }
  }
  return res;
}

Integer determinant(const IntMatrix& m) {
  if (m.rows != m.cols) throw Error(ErrCode::internal, "determinant of non-square matrix");
  int n = m.rows;
  if (n == 0) return 1;
  IntMatrix b = m;
  Integer prev = 1;
  int sign = 1;
  for (int k = 0; k + 1 < n; ++k) {
    if (b.at(k, k) == 0) {
      int r = -1;
      for (int i = k + 1; i < n; ++i)
        if (b.at(i, k) != 0) {
          r = i;
          break;
        }
      if (r < 0) return 0;
      row_swap(b, k, r);
      sign = -sign;
    }
    for (int i = k + 1; i < n; ++i)
      for (int j = k + 1; j < n; ++j)
        b.at(i, j) = (b.at(i, j) * b.at(k, k) - b.at(i, k) * b.at(k, j)) / prev;
    prev = b.at(k, k);
  }
  return sign > 0 ? b.at(n - 1, n - 1) : Integer(-b.at(n - 1, n - 1));
}

IntMatrix unimodular_inverse(const IntMatrix& m);

IntMatrix unimodular_inverse(const IntMatrix& m) {
  SnfResult s = smith_normal_form(m);
  for (int i = 0; i < std::min(s.d.rows, s.d.cols); ++i)
    if (s.d.at(i, i) != 1) throw Error(ErrCode::internal, "matrix is not unimodular");
  if (m.rows != m.cols) throw Error(ErrCode::internal, "matrix is not square");
  return s.v.mul(s.u);
}

// ----- groups -----

int FinAbGroup::rank() const {
  int r = 0;
  for (const auto& f : invariant_factors)
    if (f == 0) ++r;
  return r;
}

Integer FinAbGroup::torsion_order() const {
  Integer t = 1;
  for (const auto& f : invariant_factors)
    if (f != 0) t *= f;
  return t;
}

std::string FinAbGroup::to_string() const {
  if (invariant_factors.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& f : invariant_factors) {
    if (!first) os << " \xE2\x8A\x95 ";
    first = false;
    if (f == 0)
      os << "Z";
    else
      os << "Z/" << f;
  }
  return os.str();
}

bool iso_check(const FinAbGroup& g, const FinAbGroup& h) {
  return g.invariant_factors == h.invariant_factors;
}

FinAbGroup normalize_factors(const std::vector<Integer>& moduli) {
  int rank = 0;
  std::vector<Integer> tors;
  for (const auto& m0 : moduli) {
    Integer m = int_abs(m0);
    if (m == 0)
      ++rank;
    else if (m > 1)
      tors.push_back(m);
  }
  // local gcd/lcm swaps converge to the divisibility chain
  bool changed = true;
  int guard = 0;
  while (changed) {
    if (++guard > 64 + int(tors.size()) * 8)
      throw Error(ErrCode::internal, "invariant factor normalization failed to converge");
    std::sort(tors.begin(), tors.end());
    changed = false;
    for (size_t i = 0; i + 1 < tors.size(); ++i) {
      if (tors[i + 1] % tors[i] == 0) continue;
      Integer g = int_gcd(tors[i], tors[i + 1]);
      Integer l = int_lcm(tors[i], tors[i + 1]);
      tors[i] = g;
      tors[i + 1] = l;
      changed = true;
    }
    tors.erase(std::remove(tors.begin(), tors.end(), Integer(1)), tors.end());
  }
  FinAbGroup g;
  g.invariant_factors = tors;
  for (int i = 0; i < rank; ++i) g.invariant_factors.push_back(0);
  return g;
}

void AbElement::reduce() {
  for (size_t i = 0; i < coords.size(); ++i)
    coords[i] = mod_floor(coords[i], group.invariant_factors[i]);
}

bool AbElement::is_zero() const {
  for (size_t i = 0; i < coords.size(); ++i)
    if (mod_floor(coords[i], group.invariant_factors[i]) != 0) return false;
  return true;
}

bool AbElement::operator==(const AbElement& o) const {
  if (!iso_check(group, o.group) || coords.size() != o.coords.size()) return false;
  for (size_t i = 0; i < coords.size(); ++i)
    if (mod_floor(coords[i], group.invariant_factors[i]) !=
        mod_floor(o.coords[i], group.invariant_factors[i]))
      return false;
  return true;
}

AbElement ab_zero(const FinAbGroup& g) {
  AbElement e;
  e.group = g;
  e.coords.assign(g.invariant_factors.size(), 0);
  return e;
}

AbElement ab_add(const AbElement& x, const AbElement& y) {
  AbElement r = x;
  for (size_t i = 0; i < r.coords.size(); ++i) r.coords[i] += y.coords[i];
  r.reduce();
  return r;
}

AbElement ab_neg(const AbElement& x) {
  AbElement r = x;
  for (auto& c : r.coords) c = -c;
  r.reduce();
  return r;
}

AbElement AbHom::apply(const AbElement& x) const {
  AbElement r = ab_zero(codomain);
  for (int i = 0; i < matrix.rows; ++i) {
    Integer s = 0;
    for (int j = 0; j < matrix.cols; ++j)
      if (matrix.at(i, j) != 0) s += matrix.at(i, j) * x.coords[j];
    r.coords[i] = s;
  }
  r.reduce();
  return r;
}

bool AbHom::torsion_compatible() const {
  for (int j = 0; j < matrix.cols; ++j) {
    const Integer& mj = domain.invariant_factors[j];
    if (mj == 0) continue;
    for (int i = 0; i < matrix.rows; ++i) {
      if (mod_floor(mj * matrix.at(i, j), codomain.invariant_factors[i]) != 0) return false;
    }
  }
  return true;
}

AbHom hom_identity(const FinAbGroup& g) {
  AbHom h;
  h.domain = g;
  h.codomain = g;
  h.matrix = IntMatrix::identity(int(g.invariant_factors.size()));
  return h;
}

AbHom hom_zero(const FinAbGroup& dom, const FinAbGroup& cod) {
  AbHom h;
  h.domain = dom;
  h.codomain = cod;
  h.matrix = IntMatrix(int(cod.invariant_factors.size()), int(dom.invariant_factors.size()));
  return h;
}

AbHom hom_compose(const AbHom& first, const AbHom& second) {
  AbHom h;
  h.domain = first.domain;
  h.codomain = second.codomain;
  h.matrix = second.matrix.mul(first.matrix);
  return h;
}

FinAbGroup cokernel_presentation(const IntMatrix& m) {
  SnfResult s = smith_normal_form(m);
  std::vector<Integer> moduli;
  int lim = std::min(m.rows, m.cols);
  int nz = 0;
  for (int i = 0; i < lim; ++i)
    if (s.d.at(i, i) != 0) {
      moduli.push_back(s.d.at(i, i));
      ++nz;
    }
  for (int i = nz; i < m.rows; ++i) moduli.push_back(0);
  return normalize_factors(moduli);
}

// ----- sparse vectors -----

SpVec spv_scaled_add(const SpVec& x, const SpVec& y, const Integer& k) {
  if (k == 0) return x;
  SpVec r;
  r.reserve(x.size() + y.size());
  size_t i = 0, j = 0;
  while (i < x.size() || j < y.size()) {
    if (j == y.size() || (i < x.size() && x[i].first < y[j].first)) {
      r.push_back(x[i++]);
    } else if (i == x.size() || y[j].first < x[i].first) {
      r.emplace_back(y[j].first, k * y[j].second);
      ++j;
    } else {
      Integer v = x[i].second + k * y[j].second;
      if (v != 0) r.emplace_back(x[i].first, v);
      ++i;
      ++j;
    }
  }
  return r;
}

SpVec spv_reduced(const SpVec& x, const std::vector<Integer>& moduli) {
  SpVec r;
  r.reserve(x.size());
  for (const auto& [i, v] : x) {
    Integer w = mod_floor(v, moduli[i]);
    if (w != 0) r.emplace_back(i, w);
  }
  return r;
}

Integer spv_get(const SpVec& x, int i) {
  auto it = std::lower_bound(x.begin(), x.end(), i,
                             [](const std::pair<int, Integer>& p, int k) { return p.first < k; });
  if (it != x.end() && it->first == i) return it->second;
  return 0;
}

std::vector<Integer> spv_dense(const SpVec& x, int n) {
  std::vector<Integer> r(n);
  for (const auto& [i, v] : x) r[i] = v;
  return r;
}

SpVec spv_from_dense(const std::vector<Integer>& xs) {
  SpVec r;
  for (size_t i = 0; i < xs.size(); ++i)
    if (xs[i] != 0) r.emplace_back(int(i), xs[i]);
  return r;
}

void SparseMat::add_entry(int r, int c, const Integer& v) {
  if (v == 0) return;
  col[c].emplace_back(r, v);
}

void SparseMat::finalize() {
  for (auto& cl : col) {
    std::sort(cl.begin(), cl.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    SpVec merged;
    for (const auto& [r, v] : cl) {
      if (!merged.empty() && merged.back().first == r)
        merged.back().second += v;
      else
        merged.emplace_back(r, v);
    }
    merged.erase(std::remove_if(merged.begin(), merged.end(),
                                [](const auto& p) { return p.second == 0; }),
                 merged.end());
    cl = std::move(merged);
  }
}

std::vector<Integer> SparseMat::apply(const std::vector<Integer>& x) const {
  std::vector<Integer> r(rows);
  for (int j = 0; j < cols; ++j) {
    if (x[j] == 0) continue;
    for (const auto& [i, v] : col[j]) r[i] += v * x[j];
  }
  return r;
}

bool SparseMat::is_zero_mod(const std::vector<Integer>& row_moduli) const {
  for (const auto& cl : col)
    for (const auto& [r, v] : cl)
      if (mod_floor(v, row_moduli[r]) != 0) return false;
  return true;
}

SparseMat sp_compose(const SparseMat& first, const SparseMat& second) {
  if (second.cols != first.rows) throw Error(ErrCode::internal, "sparse compose shape mismatch");
  SparseMat r(second.rows, first.cols);
  for (int j = 0; j < first.cols; ++j) {
    SpVec acc;
    for (const auto& [k, v] : first.col[j]) acc = spv_scaled_add(acc, second.col[k], v);
    r.col[j] = std::move(acc);
  }
  return r;
}

SparseMat sp_sub(const SparseMat& x, const SparseMat& y) {
  if (x.rows != y.rows || x.cols != y.cols)
    throw Error(ErrCode::internal, "sparse sub shape mismatch");
  SparseMat r(x.rows, x.cols);
  for (int j = 0; j < x.cols; ++j) r.col[j] = spv_scaled_add(x.col[j], y.col[j], Integer(-1));
  return r;
}

SparseMat sp_from_dense(const IntMatrix& m) {
  SparseMat r(m.rows, m.cols);
  for (int j = 0; j < m.cols; ++j)
    for (int i = 0; i < m.rows; ++i)
      if (m.at(i, j) != 0) r.col[j].emplace_back(i, m.at(i, j));
  return r;
}

// ----- lattices -----

namespace {

int leading_row(const SpVec& v) { return v.empty() ? -1 : v.front().first; }

// floor division so that a - q*b lands in [0, |b|)
Integer floor_div(const Integer& a, const Integer& b) {
  Integer q = a / b;
  Integer r = a - q * b;
  if (r != 0 && ((r < 0) != (b < 0))) q -= 1;
  if (b < 0) {
    // want remainder in [0, |b|): adjust toward positive remainder
    q = a / b;
    r = a - q * b;
    if (r < 0) q += 1;
  }
  return q;
}

}  // namespace

Lattice make_lattice(std::vector<SpVec> gens, int dim) {
  std::vector<std::vector<int>> bucket(dim + 1);
  for (size_t i = 0; i < gens.size(); ++i) {
    int lr = leading_row(gens[i]);
    if (lr >= 0) bucket[lr].push_back(int(i));
  }
  Lattice l;
  l.dim = dim;
  for (int r = 0; r < dim; ++r) {
    auto& b = bucket[r];
    while (b.size() > 1) {
      // pivot: smallest magnitude lead, earliest on ties
      size_t pi = 0;
      for (size_t i = 1; i < b.size(); ++i)
        if (int_abs(gens[b[i]].front().second) < int_abs(gens[b[pi]].front().second)) pi = i;
      int pc = b[pi];
      std::vector<int> keep{pc};
      for (size_t i = 0; i < b.size(); ++i) {
        if (i == pi) continue;
        int c = b[i];
        Integer q = floor_div(gens[c].front().second, gens[pc].front().second);
        gens[c] = spv_scaled_add(gens[c], gens[pc], -q);
        int lr = leading_row(gens[c]);
        if (lr == r)
          keep.push_back(c);
        else if (lr > r)
          bucket[lr].push_back(c);
      }
      b = std::move(keep);
    }
    if (!b.empty()) {
      int pc = b[0];
      if (gens[pc].front().second < 0)
        for (auto& e : gens[pc]) e.second = -e.second;
      l.basis.push_back(std::move(gens[pc]));
      l.pivot_rows.push_back(r);
      b.clear();
    }
  }
  // canonical reduction of entries above later pivots
  for (size_t bi = 1; bi < l.basis.size(); ++bi) {
    int pr = l.pivot_rows[bi];
    const Integer& p = l.basis[bi].front().second;
    for (size_t bj = 0; bj < bi; ++bj) {
      Integer e = spv_get(l.basis[bj], pr);
      if (e == 0) continue;
      Integer q = floor_div(e, p);
      if (q != 0) l.basis[bj] = spv_scaled_add(l.basis[bj], l.basis[bi], -q);
    }
  }
  return l;
}

std::optional<std::vector<Integer>> lattice_solve(const Lattice& l, std::vector<Integer> x) {
  std::vector<Integer> coeff(l.basis.size());
  for (size_t i = 0; i < l.basis.size(); ++i) {
    const Integer& t = x[l.pivot_rows[i]];
    if (t == 0) continue;
    const Integer& p = l.basis[i].front().second;
    if (t % p != 0) return std::nullopt;
    Integer q = t / p;
    coeff[i] = q;
    for (const auto& [r, v] : l.basis[i]) x[r] -= q * v;
  }
  for (const auto& v : x)
    if (v != 0) return std::nullopt;
  return coeff;
}

std::vector<SpVec> kernel_cols(const SparseMat& m, const std::vector<Integer>& row_moduli,
                               const std::vector<Integer>& dom_moduli) {
  struct Work {
    SpVec col;
    SpVec track;
  };
  std::vector<Work> work;
  work.reserve(m.cols + m.rows);
  for (int j = 0; j < m.cols; ++j) {
    Work w;
    w.col = spv_reduced(m.col[j], row_moduli);
    w.track = SpVec{{j, Integer(1)}};
    work.push_back(std::move(w));
  }
  for (int r = 0; r < m.rows; ++r)
    if (row_moduli[r] != 0) work.push_back({SpVec{{r, row_moduli[r]}}, SpVec{}});

  std::vector<std::vector<int>> bucket(m.rows + 1);
  std::vector<SpVec> kernel;
  auto place = [&](int idx) {
    int lr = leading_row(work[idx].col);
    if (lr < 0) {
      if (!work[idx].track.empty()) kernel.push_back(std::move(work[idx].track));
    } else {
      bucket[lr].push_back(idx);
    }
  };
  for (size_t i = 0; i < work.size(); ++i) place(int(i));

  for (int r = 0; r < m.rows; ++r) {
    auto& b = bucket[r];
    while (b.size() > 1) {
      size_t pi = 0;
      for (size_t i = 1; i < b.size(); ++i)
        if (int_abs(work[b[i]].col.front().second) < int_abs(work[b[pi]].col.front().second))
          pi = i;
      int pc = b[pi];
      std::vector<int> keep{pc};
      for (size_t i = 0; i < b.size(); ++i) {
        if (i == pi) continue;
        int c = b[i];
        Integer q = floor_div(work[c].col.front().second, work[pc].col.front().second);
        work[c].col = spv_scaled_add(work[c].col, work[pc].col, -q);
        work[c].col = spv_reduced(work[c].col, row_moduli);
        work[c].track = spv_scaled_add(work[c].track, work[pc].track, -q);
        int lr = leading_row(work[c].col);
        if (lr == r)
          keep.push_back(c);
        else
          place(c);
      }
      b = std::move(keep);
    }
    b.clear();  // the surviving pivot column is not a kernel member
  }
  for (size_t j = 0; j < dom_moduli.size(); ++j)
    if (dom_moduli[j] != 0) kernel.push_back(SpVec{{int(j), dom_moduli[j]}});
  return kernel;
}

// ----- complexes -----

void check_complex(const CochainComplexZ& c) {
  for (size_t i = 0; i < c.d.size(); ++i) {
    if (c.d[i].cols != c.levels[i].size() || c.d[i].rows != c.levels[i + 1].size())
      throw Error(ErrCode::not_a_complex, "differential shape mismatch at level " +
                                              std::to_string(i));
    for (int j = 0; j < c.d[i].cols; ++j) {
      const Integer& mj = c.levels[i].moduli[j];
      if (mj == 0) continue;
      for (const auto& [r, v] : c.d[i].col[j])
        if (mod_floor(mj * v, c.levels[i + 1].moduli[r]) != 0)
          throw Error(ErrCode::not_a_complex,
                      "differential not torsion compatible at level " + std::to_string(i));
    }
  }
  for (size_t i = 0; i + 1 < c.d.size(); ++i) {
    SparseMat dd = sp_compose(c.d[i], c.d[i + 1]);
    if (!dd.is_zero_mod(c.levels[i + 2].moduli))
      throw Error(ErrCode::not_a_complex,
                  "d after d is nonzero at level " + std::to_string(i));
  }
}

// ----- quotient presentation with coordinate tracking -----

namespace {

struct LoggedQuotient {
  std::vector<Integer> factor;  // per position of the ambient Z^n
  std::vector<RowOp> ops;       // applied in order to coordinate vectors
  std::vector<int> sub_rows;    // rows entering the dense stage
  IntMatrix u, uinv;            // dense stage transform
  std::vector<int> diag_rows;   // global rows carrying dense diagonal factors, in order
};

// Presents Z^n / span(cols). Row operations are logged so coordinates can be
// carried into the diagonalized basis and back.
LoggedQuotient quotient_of(std::vector<SpVec> cols, int n) {
  LoggedQuotient q;
  q.factor.assign(n, 0);
  std::vector<char> row_done(n, 0);

  // unit pivot pass
  bool found = true;
  while (found) {
    found = false;
    for (size_t j = 0; j < cols.size() && !found; ++j) {
      int prow = -1;
      bool neg = false;
      for (const auto& [r, v] : cols[j]) {
        if (v == 1 || v == -1) {
          prow = r;
          neg = v == -1;
          break;
        }
      }
      if (prow < 0) continue;
      found = true;
      SpVec pivot = cols[j];
      if (neg)
        for (auto& e : pivot) e.second = -e.second;
      cols[j] = cols.back();
      cols.pop_back();
      for (auto& c : cols) {
        Integer e = spv_get(c, prow);
        if (e != 0) c = spv_scaled_add(c, pivot, -e);
      }
      // clear the pivot column's other entries with row ops
      for (const auto& [r, v] : pivot) {
        if (r == prow) continue;
        q.ops.push_back(RowOp{RowOp::add, r, prow, -v});
      }
      row_done[prow] = 1;
      q.factor[prow] = 1;
    }
  }
  cols.erase(std::remove_if(cols.begin(), cols.end(), [](const SpVec& c) { return c.empty(); }),
             cols.end());

  // split: singleton columns on rows untouched elsewhere give direct factors
  std::vector<int> touch(n, 0);
  for (const auto& c : cols)
    for (const auto& [r, v] : c) ++touch[r];
  std::vector<SpVec> dense_cols;
  std::vector<Integer> direct_val(n, 0);
  std::vector<char> direct(n, 0);
  for (auto& c : cols) {
    int r = c.front().first;
    if (c.size() == 1 && touch[r] == 1) {
      Integer v = int_abs(c.front().second);
      direct_val[r] = v;
      direct[r] = 1;
    } else {
      dense_cols.push_back(std::move(c));
    }
  }

  // dense stage over the coupled rows
  std::vector<int> sub;
  {
    std::vector<char> seen(n, 0);
    for (const auto& c : dense_cols)
      for (const auto& [r, v] : c)
        if (!seen[r]) {
          seen[r] = 1;
          sub.push_back(r);
        }
    std::sort(sub.begin(), sub.end());
  }
  std::map<int, int> pos;
  for (size_t i = 0; i < sub.size(); ++i) pos[sub[i]] = int(i);
  IntMatrix dsub(int(sub.size()), int(dense_cols.size()));
  for (size_t j = 0; j < dense_cols.size(); ++j)
    for (const auto& [r, v] : dense_cols[j]) dsub.at(pos[r], int(j)) = v;
  SnfResult s = smith_normal_form(dsub);
  q.sub_rows = sub;
  q.u = s.u;
  q.uinv = sub.empty() ? IntMatrix::identity(0) : unimodular_inverse(s.u);
  int lim = std::min(s.d.rows, s.d.cols);
  std::vector<Integer> dense_diag;
  for (int i = 0; i < lim && s.d.at(i, i) != 0; ++i) dense_diag.push_back(s.d.at(i, i));
  for (size_t i = 0; i < sub.size(); ++i) {
    Integer f = i < dense_diag.size() ? dense_diag[i] : Integer(0);
    q.factor[sub[i]] = f;  // position after applying u
    q.diag_rows.push_back(sub[i]);
  }
  for (int r = 0; r < n; ++r)
    if (direct[r]) q.factor[r] = direct_val[r];

  // the combined factors must already form a divisibility chain once sorted;
  // mixed-prime direct factors would break positional coordinates, so redo
  // everything densely in that case
  std::vector<Integer> tor;
  for (int r = 0; r < n; ++r)
    if (q.factor[r] > 1) tor.push_back(q.factor[r]);
  std::sort(tor.begin(), tor.end());
  for (size_t i = 0; i + 1 < tor.size(); ++i)
    if (tor[i + 1] % tor[i] != 0) {
      // fallback: single dense stage over every remaining row
      LoggedQuotient q2;
      q2.factor.assign(n, 0);
      q2.ops = q.ops;
      std::vector<SpVec> all = dense_cols;
      for (int r = 0; r < n; ++r)
        if (direct[r]) all.push_back(SpVec{{r, direct_val[r]}});
      std::vector<int> sub2;
      {
        std::vector<char> seen(n, 0);
        for (const auto& c : all)
          for (const auto& [r, v] : c)
            if (!seen[r]) {
              seen[r] = 1;
              sub2.push_back(r);
            }
        std::sort(sub2.begin(), sub2.end());
      }
      std::map<int, int> pos2;
      for (size_t k = 0; k < sub2.size(); ++k) pos2[sub2[k]] = int(k);
      IntMatrix d2(int(sub2.size()), int(all.size()));
      for (size_t j = 0; j < all.size(); ++j)
        for (const auto& [r, v] : all[j]) d2.at(pos2[r], int(j)) = v;
      SnfResult s2 = smith_normal_form(d2);
      q2.sub_rows = sub2;
      q2.u = s2.u;
      q2.uinv = sub2.empty() ? IntMatrix::identity(0) : unimodular_inverse(s2.u);
      int lim2 = std::min(s2.d.rows, s2.d.cols);
      std::vector<Integer> diag2;
      for (int k = 0; k < lim2 && s2.d.at(k, k) != 0; ++k) diag2.push_back(s2.d.at(k, k));
      for (size_t k = 0; k < sub2.size(); ++k)
        q2.factor[sub2[k]] = k < diag2.size() ? diag2[k] : Integer(0);
      for (int r = 0; r < n; ++r)
        if (q.factor[r] == 1) q2.factor[r] = 1;
      q2.diag_rows = sub2;
      return q2;
    }
  return q;
}

}  // namespace

AbElement ClassMapper::classify(const std::vector<Integer>& cochain) const {
  if (f2) return f2_classify(cochain);
  auto y0 = lattice_solve(cocycles, cochain);
  if (!y0) throw Error(ErrCode::internal, "classify called on a non-cocycle");
  std::vector<Integer> y = *y0;
  y.resize(size_t(zdim), 0);
  for (const auto& op : ops) y[op.i] += op.k * y[op.j];
  if (!sub_rows.empty()) {
    std::vector<Integer> ys(sub_rows.size());
    for (size_t i = 0; i < sub_rows.size(); ++i) ys[i] = y[sub_rows[i]];
    for (size_t i = 0; i < sub_rows.size(); ++i) {
      Integer s = 0;
      for (int j = 0; j < u.cols; ++j)
        if (u.at(int(i), j) != 0) s += u.at(int(i), j) * ys[j];
      y[sub_rows[i]] = s;
    }
  }
  AbElement e;
  e.group = group;
  e.coords.resize(kept.size());
  for (size_t k = 0; k < kept.size(); ++k)
    e.coords[k] = mod_floor(y[kept[k]], group.invariant_factors[k]);
  return e;
}

std::vector<Integer> ClassMapper::representative(int k) const {
  if (f2) return f2_representative(k);
  std::vector<Integer> y(size_t(zdim), 0);
  y[kept[k]] = 1;
  if (!sub_rows.empty()) {
    // invert the dense stage on the sub block
    std::vector<Integer> ys(sub_rows.size());
    for (size_t i = 0; i < sub_rows.size(); ++i) ys[i] = y[sub_rows[i]];
    for (size_t i = 0; i < sub_rows.size(); ++i) {
      Integer s = 0;
      for (int j = 0; j < uinv.cols; ++j)
        if (uinv.at(int(i), j) != 0) s += uinv.at(int(i), j) * ys[j];
      y[sub_rows[i]] = s;
    }
  }
  for (auto it = ops.rbegin(); it != ops.rend(); ++it) y[it->i] -= it->k * y[it->j];
  std::vector<Integer> x(size_t(level_dim), 0);
  for (size_t j = 0; j < cocycles.basis.size(); ++j) {
    if (y[j] == 0) continue;
    for (const auto& [r, v] : cocycles.basis[j]) x[r] += y[j] * v;
  }
  return x;
}

// ----- mod 2 fast path -----

namespace {

inline bool bit_get(const std::vector<uint64_t>& v, int i) {
  return (v[size_t(i) >> 6] >> (i & 63)) & 1u;
}
inline void bit_set(std::vector<uint64_t>& v, int i) { v[size_t(i) >> 6] ^= uint64_t(1) << (i & 63); }
inline void bit_xor(std::vector<uint64_t>& a, const std::vector<uint64_t>& b) {
  for (size_t i = 0; i < a.size(); ++i) a[i] ^= b[i];
}
inline int bit_words(int n) { return (n + 63) / 64; }

// kernel of m mod 2; columns returned as bit vectors over Z^cols
std::vector<std::vector<uint64_t>> kernel_mod2(const SparseMat& m) {
  int words = bit_words(m.cols);
  struct W {
    std::vector<int> col;  // sorted rows with odd entry
    std::vector<uint64_t> track;
  };
  std::vector<W> work(m.cols);
  for (int j = 0; j < m.cols; ++j) {
    for (const auto& [r, v] : m.col[j])
      if (mod_floor(v, Integer(2)) != 0) work[j].col.push_back(r);
    work[j].track.assign(words, 0);
    bit_set(work[j].track, j);
  }
  std::vector<std::vector<int>> bucket(m.rows + 1);
  std::vector<std::vector<uint64_t>> kernel;
  auto place = [&](int idx) {
    if (work[idx].col.empty())
      kernel.push_back(std::move(work[idx].track));
    else
      bucket[work[idx].col.front()].push_back(idx);
  };
  for (int j = 0; j < m.cols; ++j) place(j);
  std::vector<int> scratch;
  for (int r = 0; r < m.rows; ++r) {
    auto& b = bucket[r];
    if (b.empty()) continue;
    int pc = b[0];
    for (size_t i = 1; i < b.size(); ++i) {
      int c = b[i];
      scratch.clear();
      std::set_symmetric_difference(work[c].col.begin(), work[c].col.end(),
                                    work[pc].col.begin(), work[pc].col.end(),
                                    std::back_inserter(scratch));
      work[c].col = scratch;
      bit_xor(work[c].track, work[pc].track);
      place(c);
    }
    b.clear();
  }
  return kernel;
}

}  // namespace

AbElement ClassMapper::f2_classify(const std::vector<Integer>& cochain) const {
  std::vector<uint64_t> x(bit_words(level_dim), 0);
  for (int i = 0; i < level_dim; ++i)
    if (mod_floor(cochain[i], Integer(2)) != 0) bit_set(x, i);
  AbElement e;
  e.group = group;
  e.coords.assign(kept.size(), 0);
  for (size_t i = 0; i < f2_vecs.size(); ++i) {
    if (!bit_get(x, f2_pivots[i])) continue;
    if (f2_class_index[i] >= 0) e.coords[f2_class_index[i]] = 1;
    bit_xor(x, f2_vecs[i]);
  }
  for (uint64_t w : x)
    if (w) throw Error(ErrCode::internal, "classify called on a non-cocycle");
  return e;
}

std::vector<Integer> ClassMapper::f2_representative(int k) const {
  for (size_t i = 0; i < f2_vecs.size(); ++i)
    if (f2_class_index[i] == k) {
      std::vector<Integer> x(level_dim, 0);
      for (int b = 0; b < level_dim; ++b)
        if (bit_get(f2_vecs[i], b)) x[b] = 1;
      return x;
    }
  throw Error(ErrCode::internal, "bad class generator index");
}

// ----- cohomology -----

namespace {

ClassMapper mapper_mod2(const CochainComplexZ& c, int n) {
  ClassMapper mp;
  mp.f2 = true;
  mp.level_dim = c.levels[n].size();
  int nlev = int(c.levels.size());
  std::vector<std::vector<uint64_t>> ker;
  if (n + 1 < nlev) {
    ker = kernel_mod2(c.d[n]);
  } else {
    ker.resize(mp.level_dim);
    int words = bit_words(mp.level_dim);
    for (int i = 0; i < mp.level_dim; ++i) {
      ker[i].assign(words, 0);
      bit_set(ker[i], i);
    }
  }
  // echelon of the image, then extend by kernel vectors; the extension
  // vectors generate the quotient
  int words = bit_words(mp.level_dim);
  auto reduce = [&](std::vector<uint64_t>& x) {
    for (size_t i = 0; i < mp.f2_vecs.size(); ++i)
      if (bit_get(x, mp.f2_pivots[i])) bit_xor(x, mp.f2_vecs[i]);
  };
  auto lead = [&](const std::vector<uint64_t>& x) {
    for (int w = 0; w < words; ++w)
      if (x[w]) {
        unsigned long b = __builtin_ctzll(x[w]);
        return w * 64 + int(b);
      }
    return -1;
  };
  if (n >= 1) {
    for (int j = 0; j < c.d[n - 1].cols; ++j) {
      std::vector<uint64_t> x(words, 0);
      for (const auto& [r, v] : c.d[n - 1].col[j])
        if (mod_floor(v, Integer(2)) != 0) bit_set(x, r);
      reduce(x);
      int l = lead(x);
      if (l >= 0) {
        mp.f2_vecs.push_back(std::move(x));
        mp.f2_pivots.push_back(l);
        mp.f2_class_index.push_back(-1);
      }
    }
  }
  int nclasses = 0;
  for (auto& kv : ker) {
    std::vector<uint64_t> x = kv;
    reduce(x);
    int l = lead(x);
    if (l >= 0) {
      mp.f2_vecs.push_back(std::move(x));
      mp.f2_pivots.push_back(l);
      mp.f2_class_index.push_back(nclasses++);
    }
  }
  // keep echelon sorted by pivot so classify reduces in one sweep
  std::vector<size_t> order(mp.f2_vecs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return mp.f2_pivots[a] < mp.f2_pivots[b]; });
  std::vector<std::vector<uint64_t>> vs;
  std::vector<int> ps, ci;
  for (size_t i : order) {
    vs.push_back(std::move(mp.f2_vecs[i]));
    ps.push_back(mp.f2_pivots[i]);
    ci.push_back(mp.f2_class_index[i]);
  }
  mp.f2_vecs = std::move(vs);
  mp.f2_pivots = std::move(ps);
  mp.f2_class_index = std::move(ci);

  mp.group.invariant_factors.assign(nclasses, Integer(2));
  mp.kept.assign(nclasses, 0);
  return mp;
}

}  // namespace

ClassMapper cohomology_mapper(const CochainComplexZ& c, int n) {
  int nlev = int(c.levels.size());
  if (n < 0 || n >= nlev) throw Error(ErrCode::index_out_of_range, "no such degree");
  // complex sanity around the requested degree
  if (n >= 1 && n + 1 < nlev) {
    SparseMat dd = sp_compose(c.d[n - 1], c.d[n]);
    if (!dd.is_zero_mod(c.levels[n + 1].moduli))
      throw Error(ErrCode::not_a_complex, "d after d is nonzero at degree " + std::to_string(n - 1));
  }

  bool all2 = true;
  for (int l = std::max(0, n - 1); l <= std::min(nlev - 1, n + 1) && all2; ++l)
    for (const auto& m : c.levels[l].moduli)
      if (m != 2) {
        all2 = false;
        break;
      }
  if (all2) return mapper_mod2(c, n);

  ClassMapper mp;
  mp.level_dim = c.levels[n].size();
  std::vector<SpVec> kg;
  if (n + 1 < nlev) {
    kg = kernel_cols(c.d[n], c.levels[n + 1].moduli, c.levels[n].moduli);
  } else {
    for (int i = 0; i < mp.level_dim; ++i) kg.push_back(SpVec{{i, Integer(1)}});
  }
  mp.cocycles = make_lattice(std::move(kg), mp.level_dim);
  int z = int(mp.cocycles.basis.size());
  mp.zdim = z;

  std::vector<SpVec> bc;
  auto push_gen = [&](const SpVec& g) {
    auto sol = lattice_solve(mp.cocycles, spv_dense(g, mp.level_dim));
    if (!sol) throw Error(ErrCode::not_a_complex, "image does not land in the cocycles");
    SpVec s = spv_from_dense(*sol);
    if (!s.empty()) bc.push_back(std::move(s));
  };
  if (n >= 1)
    for (int j = 0; j < c.d[n - 1].cols; ++j) push_gen(c.d[n - 1].col[j]);
  for (int i = 0; i < mp.level_dim; ++i)
    if (c.levels[n].moduli[i] != 0) push_gen(SpVec{{i, c.levels[n].moduli[i]}});

  LoggedQuotient q = quotient_of(std::move(bc), z);
  mp.ops = std::move(q.ops);
  mp.sub_rows = std::move(q.sub_rows);
  mp.u = std::move(q.u);
  mp.uinv = std::move(q.uinv);

  // canonical order: torsion factors ascending, then free positions
  std::vector<std::pair<Integer, int>> torsion;
  std::vector<int> free_pos;
  for (int r = 0; r < z; ++r) {
    if (q.factor[r] == 1) continue;
    if (q.factor[r] == 0)
      free_pos.push_back(r);
    else
      torsion.emplace_back(q.factor[r], r);
  }
  std::sort(torsion.begin(), torsion.end());
  for (const auto& [f, r] : torsion) {
    mp.kept.push_back(r);
    mp.group.invariant_factors.push_back(f);
  }
  for (int r : free_pos) {
    mp.kept.push_back(r);
    mp.group.invariant_factors.push_back(0);
  }
  return mp;
}

FinAbGroup cohomology_at(const CochainComplexZ& c, int n) {
  return cohomology_mapper(c, n).group;
}

// ----- preimages -----

namespace {

struct PreimageContext {
  Lattice stacked;   // in Z^{cod+dom}
  int cod = 0, dom = 0;
  std::vector<SpVec> kernel_basis;  // dom coordinates, column HNF
  std::vector<int> kernel_pivots;
};

PreimageContext preimage_context(const AbHom& h) {
  PreimageContext ctx;
  ctx.cod = int(h.codomain.invariant_factors.size());
  ctx.dom = int(h.domain.invariant_factors.size());
  std::vector<SpVec> gens;
  for (int j = 0; j < ctx.dom; ++j) {
    SpVec g;
    for (int r = 0; r < ctx.cod; ++r)
      if (h.matrix.at(r, j) != 0) g.emplace_back(r, h.matrix.at(r, j));
    g.emplace_back(ctx.cod + j, 1);
    gens.push_back(std::move(g));
  }
  for (int r = 0; r < ctx.cod; ++r)
    if (h.codomain.invariant_factors[r] != 0)
      gens.push_back(SpVec{{r, h.codomain.invariant_factors[r]}});
  for (int j = 0; j < ctx.dom; ++j)
    if (h.domain.invariant_factors[j] != 0)
      gens.push_back(SpVec{{ctx.cod + j, h.domain.invariant_factors[j]}});
  ctx.stacked = make_lattice(std::move(gens), ctx.cod + ctx.dom);
  for (size_t i = 0; i < ctx.stacked.basis.size(); ++i) {
    if (ctx.stacked.pivot_rows[i] < ctx.cod) continue;
    SpVec b;
    for (const auto& [r, v] : ctx.stacked.basis[i]) b.emplace_back(r - ctx.cod, v);
    ctx.kernel_pivots.push_back(ctx.stacked.pivot_rows[i] - ctx.cod);
    ctx.kernel_basis.push_back(std::move(b));
  }
  return ctx;
}

std::optional<std::vector<Integer>> preimage_particular(const PreimageContext& ctx,
                                                        const AbElement& y) {
  std::vector<Integer> t(ctx.cod + ctx.dom, 0);
  for (int r = 0; r < ctx.cod; ++r) t[r] = y.coords[r];
  for (size_t i = 0; i < ctx.stacked.basis.size(); ++i) {
    if (ctx.stacked.pivot_rows[i] >= ctx.cod) break;
    int pr = ctx.stacked.pivot_rows[i];
    if (t[pr] == 0) continue;
    const Integer& p = ctx.stacked.basis[i].front().second;
    if (t[pr] % p != 0) return std::nullopt;
    Integer q = t[pr] / p;
    for (const auto& [r, v] : ctx.stacked.basis[i]) t[r] -= q * v;
  }
  for (int r = 0; r < ctx.cod; ++r)
    if (t[r] != 0) return std::nullopt;
  std::vector<Integer> x(ctx.dom);
  for (int j = 0; j < ctx.dom; ++j) x[j] = -t[ctx.cod + j];
  return x;
}

void canonical_reduce(const PreimageContext& ctx, std::vector<Integer>& x) {
  for (size_t i = 0; i < ctx.kernel_basis.size(); ++i) {
    int pr = ctx.kernel_pivots[i];
    const Integer& p = ctx.kernel_basis[i].front().second;
    Integer q = floor_div(x[pr], p);
    if (q != 0)
      for (const auto& [r, v] : ctx.kernel_basis[i]) x[r] -= q * v;
  }
}

}  // namespace

std::optional<AbElement> solve_preimage(const AbHom& h, const AbElement& y) {
  if (!h.torsion_compatible()) throw Error(ErrCode::validation, "hom is not torsion compatible");
  PreimageContext ctx = preimage_context(h);
  auto x = preimage_particular(ctx, y);
  if (!x) return std::nullopt;
  canonical_reduce(ctx, *x);
  AbElement e;
  e.group = h.domain;
  e.coords = *x;
  e.reduce();
  return e;
}

std::optional<AbElement> solve_preimage_alt(const AbHom& h, const AbElement& y) {
  if (!h.torsion_compatible()) throw Error(ErrCode::validation, "hom is not torsion compatible");
  PreimageContext ctx = preimage_context(h);
  auto x = preimage_particular(ctx, y);
  if (!x) return std::nullopt;
  canonical_reduce(ctx, *x);
  if (!ctx.kernel_basis.empty())
    for (const auto& [r, v] : ctx.kernel_basis.front()) (*x)[r] += v;
  AbElement e;
  e.group = h.domain;
  e.coords = *x;
  e.reduce();
  return e;
}

}  // namespace trackhom
