#pragma once

#include "exitctrl/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace exitctrl {

enum class ExprOp {
    Constant,
    State,     // x[i]
    Control,   // v[j]
    Value,     // y
    Gradient,  // z[j]
    Add,
    Mul,
    Negate,
    Min,
    Max,
    Abs,
    Exp,
    Sin,
    Cos,
    Tanh,
    Pow,  // integer power, exponent in the payload
};

/// Arguments an expression may read. Spans may be empty when the
/// expression does not reference them.
struct ExprArgs {
    std::span<const double> x;
    std::span<const double> v;
    double y = 0.0;
    std::span<const double> z;
};

/// Immutable coefficient expression tree. Copies share nodes.
///
/// There is no division or logarithm node, so evaluation is total.
class Expr {
public:
    Expr() : Expr(constant(0.0)) {}

    static Expr constant(double c) { return Expr(ExprOp::Constant, c, 0, {}); }
    static Expr state(int i) { return Expr(ExprOp::State, 0.0, i, {}); }
    static Expr control(int j) { return Expr(ExprOp::Control, 0.0, j, {}); }
    static Expr value() { return Expr(ExprOp::Value, 0.0, 0, {}); }
    static Expr gradient(int j) { return Expr(ExprOp::Gradient, 0.0, j, {}); }
    static Expr add(std::vector<Expr> args) { return Expr(ExprOp::Add, 0.0, 0, std::move(args)); }
    static Expr mul(std::vector<Expr> args) { return Expr(ExprOp::Mul, 0.0, 0, std::move(args)); }
    static Expr negate(Expr a) { return Expr(ExprOp::Negate, 0.0, 0, {std::move(a)}); }
    static Expr min(Expr a, Expr b) { return Expr(ExprOp::Min, 0.0, 0, {std::move(a), std::move(b)}); }
    static Expr max(Expr a, Expr b) { return Expr(ExprOp::Max, 0.0, 0, {std::move(a), std::move(b)}); }
    static Expr abs(Expr a) { return Expr(ExprOp::Abs, 0.0, 0, {std::move(a)}); }
    static Expr exp(Expr a) { return Expr(ExprOp::Exp, 0.0, 0, {std::move(a)}); }
    static Expr sin(Expr a) { return Expr(ExprOp::Sin, 0.0, 0, {std::move(a)}); }
    static Expr cos(Expr a) { return Expr(ExprOp::Cos, 0.0, 0, {std::move(a)}); }
    static Expr tanh(Expr a) { return Expr(ExprOp::Tanh, 0.0, 0, {std::move(a)}); }
    static Expr pow(Expr a, int n) { return Expr(ExprOp::Pow, static_cast<double>(n), 0, {std::move(a)}); }

    ExprOp op() const noexcept { return node_->op; }
    double payload() const noexcept { return node_->value; }
    int index() const noexcept { return node_->index; }
    const std::vector<Expr>& args() const noexcept { return node_->args; }

    bool is_constant() const noexcept { return node_->op == ExprOp::Constant; }

    /// True when no State/Control/Value/Gradient leaf occurs.
    bool is_closed() const noexcept {
        return !node_->uses_state && !node_->uses_control && !node_->uses_value && node_->max_gradient < 0;
    }
    bool uses_state() const noexcept { return node_->uses_state; }
    bool uses_control() const noexcept { return node_->uses_control; }
    bool uses_value() const noexcept { return node_->uses_value; }
    bool uses_gradient() const noexcept { return node_->max_gradient >= 0; }
    int max_state_index() const noexcept { return node_->max_state; }
    int max_control_index() const noexcept { return node_->max_control; }
    int max_gradient_index() const noexcept { return node_->max_gradient; }

    double eval(const ExprArgs& a) const { return eval_node(*node_, a); }

    friend bool operator==(const Expr& lhs, const Expr& rhs) {
        if (lhs.node_ == rhs.node_) return true;
        const Node& l = *lhs.node_;
        const Node& r = *rhs.node_;
        return l.op == r.op && l.value == r.value && l.index == r.index && l.args == r.args;
    }

    friend Expr operator+(Expr a, Expr b) { return add({std::move(a), std::move(b)}); }
    friend Expr operator*(Expr a, Expr b) { return mul({std::move(a), std::move(b)}); }
    friend Expr operator-(Expr a) { return negate(std::move(a)); }
    friend Expr operator-(Expr a, Expr b) { return add({std::move(a), negate(std::move(b))}); }

private:
    struct Node {
        ExprOp op;
        double value;
        int index;
        std::vector<Expr> args;
        bool uses_state = false;
        bool uses_control = false;
        bool uses_value = false;
        int max_state = -1;
        int max_control = -1;
        int max_gradient = -1;
    };

    Expr(ExprOp op, double value, int index, std::vector<Expr> args) {
        auto n = std::make_shared<Node>(Node{op, value, index, std::move(args)});
        switch (op) {
            case ExprOp::State: n->uses_state = true; n->max_state = index; break;
            case ExprOp::Control: n->uses_control = true; n->max_control = index; break;
            case ExprOp::Value: n->uses_value = true; break;
            case ExprOp::Gradient: n->max_gradient = index; break;
            default: break;
        }
        for (const auto& c : n->args) {
            const Node& cn = *c.node_;
            n->uses_state = n->uses_state || cn.uses_state;
            n->uses_control = n->uses_control || cn.uses_control;
            n->uses_value = n->uses_value || cn.uses_value;
            n->max_state = std::max(n->max_state, cn.max_state);
            n->max_control = std::max(n->max_control, cn.max_control);
            n->max_gradient = std::max(n->max_gradient, cn.max_gradient);
        }
        node_ = std::move(n);
    }

    static double eval_node(const Node& n, const ExprArgs& a) {
        switch (n.op) {
            case ExprOp::Constant: return n.value;
            case ExprOp::State: return a.x[static_cast<std::size_t>(n.index)];
            case ExprOp::Control: return a.v[static_cast<std::size_t>(n.index)];
            case ExprOp::Value: return a.y;
            case ExprOp::Gradient: return a.z[static_cast<std::size_t>(n.index)];
            case ExprOp::Add: {
                double s = 0.0;
                for (const auto& c : n.args) s += eval_node(*c.node_, a);
                return s;
            }
            case ExprOp::Mul: {
                double p = 1.0;
                for (const auto& c : n.args) p *= eval_node(*c.node_, a);
                return p;
            }
            case ExprOp::Negate: return -eval_node(*n.args[0].node_, a);
            case ExprOp::Min: {
                double m = eval_node(*n.args[0].node_, a);
                for (std::size_t i = 1; i < n.args.size(); ++i) m = std::min(m, eval_node(*n.args[i].node_, a));
                return m;
            }
            case ExprOp::Max: {
                double m = eval_node(*n.args[0].node_, a);
                for (std::size_t i = 1; i < n.args.size(); ++i) m = std::max(m, eval_node(*n.args[i].node_, a));
                return m;
            }
            case ExprOp::Abs: return std::abs(eval_node(*n.args[0].node_, a));
            case ExprOp::Exp: return std::exp(eval_node(*n.args[0].node_, a));
            case ExprOp::Sin: return std::sin(eval_node(*n.args[0].node_, a));
            case ExprOp::Cos: return std::cos(eval_node(*n.args[0].node_, a));
            case ExprOp::Tanh: return std::tanh(eval_node(*n.args[0].node_, a));
            case ExprOp::Pow: {
                const double base = eval_node(*n.args[0].node_, a);
                int e = static_cast<int>(n.value);
                double r = 1.0;
                double b = base;
                for (; e > 0; e >>= 1) {
                    if (e & 1) r *= b;
                    b *= b;
                }
                return r;
            }
        }
        return 0.0;
    }

    std::shared_ptr<const Node> node_;
};

// ---------------------------------------------------------------------------
// JSON form: {"op": name, "args": [...], "value": number}

namespace detail {

struct OpName {
    ExprOp op;
    std::string_view name;
    int min_args;
    int max_args;  // -1 = unbounded
};

inline constexpr OpName kOpNames[] = {
    {ExprOp::Constant, "const", 0, 0}, {ExprOp::State, "x", 0, 0},     {ExprOp::Control, "v", 0, 0},
    {ExprOp::Value, "y", 0, 0},        {ExprOp::Gradient, "z", 0, 0},  {ExprOp::Add, "add", 1, -1},
    {ExprOp::Mul, "mul", 1, -1},       {ExprOp::Negate, "neg", 1, 1},  {ExprOp::Min, "min", 2, -1},
    {ExprOp::Max, "max", 2, -1},       {ExprOp::Abs, "abs", 1, 1},     {ExprOp::Exp, "exp", 1, 1},
    {ExprOp::Sin, "sin", 1, 1},        {ExprOp::Cos, "cos", 1, 1},     {ExprOp::Tanh, "tanh", 1, 1},
    {ExprOp::Pow, "pow", 1, 1},
};

inline const OpName& op_info(ExprOp op) {
    for (const auto& e : kOpNames)
        if (e.op == op) return e;
    return kOpNames[0];
}

}  // namespace detail

inline nlohmann::json to_json(const Expr& e) {
    nlohmann::json j;
    j["op"] = std::string(detail::op_info(e.op()).name);
    switch (e.op()) {
        case ExprOp::Constant: j["value"] = e.payload(); break;
        case ExprOp::State:
        case ExprOp::Control:
        case ExprOp::Gradient: j["value"] = e.index(); break;
        case ExprOp::Pow: j["value"] = static_cast<int>(e.payload()); break;
        default: break;
    }
    if (!e.args().empty()) {
        nlohmann::json args = nlohmann::json::array();
        for (const auto& a : e.args()) args.push_back(to_json(a));
        j["args"] = std::move(args);
    }
    return j;
}

inline Expr expr_from_json(const nlohmann::json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "expression node must be an object");
    for (const auto& [key, _] : j.items()) {
        if (key != "op" && key != "args" && key != "value")
            throw ConfigError(path + "/" + key, "unknown expression field");
    }
    if (!j.contains("op") || !j["op"].is_string()) throw ConfigError(path + "/op", "missing or non-string op");
    const std::string name = j["op"].get<std::string>();
    const detail::OpName* info = nullptr;
    for (const auto& e : detail::kOpNames)
        if (e.name == name) info = &e;
    if (info == nullptr) throw ConfigError(path + "/op", "unknown op '" + name + "'");

    std::vector<Expr> args;
    if (j.contains("args")) {
        const auto& ja = j["args"];
        if (!ja.is_array()) throw ConfigError(path + "/args", "args must be an array");
        for (std::size_t i = 0; i < ja.size(); ++i)
            args.push_back(expr_from_json(ja[i], path + "/args/" + std::to_string(i)));
    }
    const int n = static_cast<int>(args.size());
    if (n < info->min_args || (info->max_args >= 0 && n > info->max_args))
        throw ConfigError(path + "/args", "wrong argument count for op '" + name + "'");

    auto need_value = [&]() -> const nlohmann::json& {
        if (!j.contains("value") || !j["value"].is_number())
            throw ConfigError(path + "/value", "op '" + name + "' requires a numeric value");
        return j["value"];
    };
    auto need_index = [&]() -> int {
        const auto& v = need_value();
        if (!v.is_number_integer() || v.get<long long>() < 0)
            throw ConfigError(path + "/value", "index must be a nonnegative integer");
        return static_cast<int>(v.get<long long>());
    };

    switch (info->op) {
        case ExprOp::Constant: {
            const double c = need_value().get<double>();
            if (!std::isfinite(c)) throw ConfigError(path + "/value", "constant must be finite");
            return Expr::constant(c);
        }
        case ExprOp::State: return Expr::state(need_index());
        case ExprOp::Control: return Expr::control(need_index());
        case ExprOp::Gradient: return Expr::gradient(need_index());
        case ExprOp::Value: return Expr::value();
        case ExprOp::Add: return Expr::add(std::move(args));
        case ExprOp::Mul: return Expr::mul(std::move(args));
        case ExprOp::Negate: return Expr::negate(std::move(args[0]));
        case ExprOp::Min:
            if (n == 2) return Expr::min(std::move(args[0]), std::move(args[1]));
            break;
        case ExprOp::Max:
            if (n == 2) return Expr::max(std::move(args[0]), std::move(args[1]));
            break;
        case ExprOp::Abs: return Expr::abs(std::move(args[0]));
        case ExprOp::Exp: return Expr::exp(std::move(args[0]));
        case ExprOp::Sin: return Expr::sin(std::move(args[0]));
        case ExprOp::Cos: return Expr::cos(std::move(args[0]));
        case ExprOp::Tanh: return Expr::tanh(std::move(args[0]));
        case ExprOp::Pow: return Expr::pow(std::move(args[0]), need_index());
    }
    // n-ary min/max fold into nested binary nodes
    Expr acc = args[0];
    for (int i = 1; i < n; ++i)
        acc = info->op == ExprOp::Min ? Expr::min(acc, args[static_cast<std::size_t>(i)])
                                      : Expr::max(acc, args[static_cast<std::size_t>(i)]);
    return acc;
}

}  // namespace exitctrl
