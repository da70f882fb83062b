#include "fvb/table_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "fvb/error.hpp"

namespace fvb {

namespace {

constexpr char magic[4] = {'F', 'V', 'B', 'T'};
constexpr std::uint32_t format_version = 1;

struct Writer {
    std::ofstream out;

    explicit Writer(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw IoError("cannot open '" + path + "' for writing");
    }
    void bytes(const void* p, std::size_t n) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void i32(std::int32_t v) { bytes(&v, 4); }
    void f64(double v) { bytes(&v, 8); }
    void ints(const std::vector<int>& v) {
        u64(v.size());
        for (int x : v) i32(x);
    }
    void vec(const Eigen::VectorXd& v) {
        u64(static_cast<std::uint64_t>(v.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
    }
    void mat(const Eigen::MatrixXd& m) {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
        }
    }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    void doubles(const std::vector<double>& v) {
        u64(v.size());
        for (double x : v) f64(x);
    }
    void strings(const std::vector<std::string>& v) {
        u64(v.size());
        for (const auto& s : v) str(s);
    }
};

struct Reader {
    std::ifstream in;
    std::string path;

    explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw IoError("cannot open '" + p + "' for reading");
    }
    void bytes(void* p, std::size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n) {
            throw SchemaError(path + ": table file is truncated");
        }
    }
    std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
    std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
    std::int32_t i32() { std::int32_t v; bytes(&v, 4); return v; }
    double f64() { double v; bytes(&v, 8); return v; }
    std::uint64_t len() {
        std::uint64_t n = u64();
        if (n > (1ULL << 32)) throw SchemaError(path + ": implausible length field");
        return n;
    }
    std::vector<int> ints() {
        std::vector<int> v(len());
        for (auto& x : v) x = i32();
        return v;
    }
    Eigen::VectorXd vec() {
        Eigen::VectorXd v(static_cast<Eigen::Index>(len()));
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
        return v;
    }
    Eigen::MatrixXd mat() {
        std::uint64_t r = len(), c = len();
        Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = f64();
        }
        return m;
    }
    std::string str() {
        std::string s(len(), '\0');
        if (!s.empty()) bytes(s.data(), s.size());
        return s;
    }
    std::vector<double> doubles() {
        std::vector<double> v(len());
        for (auto& x : v) x = f64();
        return v;
    }
    std::vector<std::string> strings() {
        std::vector<std::string> v(len());
        for (auto& s : v) s = str();
        return v;
    }
};

void write_fit(Writer& w, const GmmPosterior& q) {
    w.f64(q.omega);
    w.vec(q.alpha);
    w.vec(q.beta);
    w.vec(q.nu);
    w.mat(q.m);
    w.u64(q.W.size());
    for (const auto& W : q.W) w.mat(W);
    w.mat(q.r);
    w.doubles(q.elbo_trace);
    w.i32(q.n_iter);
    w.u8(q.converged ? 1 : 0);
    w.strings(q.warnings);
}

GmmPosterior read_gmm_fit(Reader& r) {
    GmmPosterior q;
    q.omega = r.f64();
    q.alpha = r.vec();
    q.beta = r.vec();
    q.nu = r.vec();
    q.m = r.mat();
    q.W.resize(r.len());
    for (auto& W : q.W) W = r.mat();
    q.r = r.mat();
    q.elbo_trace = r.doubles();
    q.n_iter = r.i32();
    q.converged = r.u8() != 0;
    q.warnings = r.strings();
    return q;
}

void write_fit(Writer& w, const BmlrPosterior& q) {
    w.f64(q.omega);
    w.f64(q.lambda);
    w.vec(q.alpha);
    w.vec(q.a);
    w.vec(q.b);
    w.mat(q.m);
    w.u64(q.S.size());
    for (const auto& S : q.S) w.mat(S);
    w.mat(q.r);
    w.doubles(q.elbo_trace);
    w.i32(q.n_iter);
    w.u8(q.converged ? 1 : 0);
    w.strings(q.warnings);
}

BmlrPosterior read_bmlr_fit(Reader& r) {
    BmlrPosterior q;
    q.omega = r.f64();
    q.lambda = r.f64();
    q.alpha = r.vec();
    q.a = r.vec();
    q.b = r.vec();
    q.m = r.mat();
    q.S.resize(r.len());
    for (auto& S : q.S) S = r.mat();
    q.r = r.mat();
    q.elbo_trace = r.doubles();
    q.n_iter = r.i32();
    q.converged = r.u8() != 0;
    q.warnings = r.strings();
    return q;
}

template <typename Posterior>
void save_impl(const std::string& path, const CalibrationTable<Posterior>& t,
               std::uint8_t model_tag) {
    Writer w(path);
    w.bytes(magic, 4);
    w.u32(format_version);
    w.u8(model_tag);
    w.u64(t.seed);
    w.i32(t.B);
    w.i32(t.K);
    w.i32(t.n_units);
    w.i32(t.p);
    w.f64(t.lambda);
    w.u64(t.columns.size());
    for (const auto& col : t.columns) {
        w.f64(col.omega);
        w.ints(col.split1);
        w.ints(col.split2);
        write_fit(w, col.full);
        write_fit(w, col.split1_fit);
        w.u64(col.boot_fits.size());
        for (const auto& q : col.boot_fits) write_fit(w, q);
    }
    if (!w.out) throw IoError("write to '" + path + "' failed");
}

std::uint8_t read_header(Reader& r) {
    char m[4];
    r.bytes(m, 4);
    if (std::memcmp(m, magic, 4) != 0) {
        throw SchemaError(r.path + ": not a calibration table file");
    }
    std::uint32_t ver = r.u32();
    if (ver != format_version) {
        throw SchemaError(r.path + ": unsupported table format version " +
                          std::to_string(ver));
    }
    return r.u8();
}

template <typename Posterior, typename ReadFit>
CalibrationTable<Posterior> load_impl(Reader& r, const ReadFit& read_fit) {
    CalibrationTable<Posterior> t;
    t.seed = r.u64();
    t.B = r.i32();
    t.K = r.i32();
    t.n_units = r.i32();
    t.p = r.i32();
    t.lambda = r.f64();
    t.columns.resize(r.len());
    for (auto& col : t.columns) {
        col.omega = r.f64();
        col.split1 = r.ints();
        col.split2 = r.ints();
        col.full = read_fit(r);
        col.split1_fit = read_fit(r);
        col.boot_fits.resize(r.len());
        for (auto& q : col.boot_fits) q = read_fit(r);
    }
    return t;
}

}  // namespace

void save_table(const std::string& path, const GmmTable& table) {
    save_impl(path, table, 0);
}

void save_table(const std::string& path, const BmlrTable& table) {
    save_impl(path, table, 1);
}

TableModel peek_table_model(const std::string& path) {
    Reader r(path);
    std::uint8_t tag = read_header(r);
    if (tag == 0) return TableModel::Gmm;
    if (tag == 1) return TableModel::Bmlr;
    throw SchemaError(path + ": unknown model tag in table file");
}

GmmTable load_gmm_table(const std::string& path) {
    Reader r(path);
    if (read_header(r) != 0) {
        throw SchemaError(path + ": table was built for the regression model");
    }
    return load_impl<GmmPosterior>(r, read_gmm_fit);
}

BmlrTable load_bmlr_table(const std::string& path) {
    Reader r(path);
    if (read_header(r) != 1) {
        throw SchemaError(path + ": table was built for the Gaussian mixture model");
    }
    return load_impl<BmlrPosterior>(r, read_bmlr_fit);
}

}  // namespace fvb
