// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qforge/common.hpp"
#include "qforge/hwmodel.hpp"
#include "qforge/intrt.hpp"
#include "qforge/model_io.hpp"

namespace qforge {

// ---- template machinery ------------------------------------------------------

// Minimal {{name}} placeholder substitution. Rendering fails on unknown
// keys and on any marker left unresolved.
inline std::string render_template(std::string_view tmpl,
                                   const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const std::size_t open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        out.append(tmpl.substr(pos, open - pos));
        const std::size_t close = tmpl.find("}}", open);
        if (close == std::string_view::npos)
            throw CodegenError("template: unterminated placeholder");
        const std::string key(tmpl.substr(open + 2, close - open - 2));
        const auto it = vars.find(key);
        if (it == vars.end()) throw CodegenError("template: unresolved placeholder '" + key + "'");
        out.append(it->second);
        pos = close + 2;
    }
    if (out.find("{{") != std::string::npos)
        throw CodegenError("template: unresolved marker in rendered text");
    return out;
}

struct RtlFile {
    std::string name;
    std::string content;
};

struct RtlDesign {
    std::vector<RtlFile> vhdl_files;  // compile order: package, stages, top, testbench
    std::vector<RtlFile> constraint_files;
    std::vector<RtlFile> vector_files;
    std::string top_entity;
    std::string testbench_entity;
    std::size_t stage_count = 0;
};

namespace detail {

inline std::string int_list(const std::vector<std::int32_t>& values) {
    if (values.empty()) throw CodegenError("int_list: empty ROM");
    std::ostringstream os;
    if (values.size() == 1) {
        os << "(0 => " << values[0] << ")";
        return os.str();
    }
    os << "(";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) os << ", ";
        if (i % 12 == 0 && i) os << "\n    ";
        os << values[i];
    }
    os << ")";
    return os.str();
}

inline std::string num(std::int64_t v) { return std::to_string(v); }

}  // namespace detail

// ---- static package -----------------------------------------------------------

// Shared arithmetic: the requantization (multiply, add-before-shift,
// arithmetic shift, zero point, clamp) and the saturating add, with the
// same semantics as the integer runtime.
inline constexpr const char* kPkgTemplate = R"(-- {{banner}}
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;

package qf_pkg is
  function clamp_int(v : integer; lo : integer; hi : integer) return integer;
  function requant(acc : integer; m : integer; s : natural;
                   zp : integer; lo : integer; hi : integer) return integer;
  function requant_raw(acc : integer; m : integer; s : natural) return integer;
  function requant_bn(acc : integer; m : integer; o : integer; s : natural;
                      zp : integer; lo : integer; hi : integer) return integer;
  function sat_add(a : integer; b : integer; zp : integer;
                   lo : integer; hi : integer) return integer;
  function floor_div(a : integer; n : positive) return integer;
end package;

package body qf_pkg is
  function clamp_int(v : integer; lo : integer; hi : integer) return integer is
  begin
    if v < lo then return lo;
    elsif v > hi then return hi;
    else return v;
    end if;
  end function;

  -- ((acc * m + 2^(s-1)) >>> s) + zp, clamped: round-half-up rescaling.
  function requant(acc : integer; m : integer; s : natural;
                   zp : integer; lo : integer; hi : integer) return integer is
    variable prod : signed(71 downto 0);
    variable wide : signed(71 downto 0);
  begin
    prod := to_signed(acc, 40) * to_signed(m, 32);
    if s > 0 then
      prod := prod + shift_left(to_signed(1, 72), s - 1);
    end if;
    wide := shift_right(prod, s) + to_signed(zp, 72);
    if wide < to_signed(lo, 72) then return lo;
    elsif wide > to_signed(hi, 72) then return hi;
    else return to_integer(wide(31 downto 0));
    end if;
  end function;

  -- Same rescaling without zero point or clamp, for fixed-point stages.
  function requant_raw(acc : integer; m : integer; s : natural) return integer is
    variable prod : signed(71 downto 0);
    variable shifted : signed(71 downto 0);
  begin
    prod := to_signed(acc, 40) * to_signed(m, 32);
    if s > 0 then
      prod := prod + shift_left(to_signed(1, 72), s - 1);
    end if;
    shifted := shift_right(prod, s);
    return to_integer(shifted(31 downto 0));
  end function;

  -- Folded-BatchNorm rescaling: the affine constant is added before the
  -- rounding shift, so the channel transform rounds exactly once.
  function requant_bn(acc : integer; m : integer; o : integer; s : natural;
                      zp : integer; lo : integer; hi : integer) return integer is
    variable prod : signed(71 downto 0);
    variable wide : signed(71 downto 0);
  begin
    prod := to_signed(acc, 40) * to_signed(m, 32) + to_signed(o, 72);
    if s > 0 then
      prod := prod + shift_left(to_signed(1, 72), s - 1);
    end if;
    wide := shift_right(prod, s) + to_signed(zp, 72);
    if wide < to_signed(lo, 72) then return lo;
    elsif wide > to_signed(hi, 72) then return hi;
    else return to_integer(wide(31 downto 0));
    end if;
  end function;

  -- clamp(a + b - zp): addition of two codes sharing one scale.
  function sat_add(a : integer; b : integer; zp : integer;
                   lo : integer; hi : integer) return integer is
  begin
    return clamp_int(a + b - zp, lo, hi);
  end function;

  function floor_div(a : integer; n : positive) return integer is
  begin
    return (a - (a mod n)) / n;  -- vhdl mod is floor-signed for n > 0
  end function;
end package body;
)";

// ---- stage templates -----------------------------------------------------------

// Sequential-MAC linear stage: buffers its input, then one multiply per
// cycle; weights and biases live in inferred ROMs; the requantization
// constants come from the layer's plan. {{emit_expr}} is the output hook
// (plain requant, positional-code add, or ReLU floor).
inline constexpr const char* kLinearTemplate = R"(-- {{banner}}
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;
use work.qf_pkg.all;

entity {{entity}} is
  generic (
    IN_DIM  : integer := {{in_dim}};
    OUT_DIM : integer := {{out_dim}};
    N_ROWS  : integer := {{n_rows}}
  );
  port (
    clk       : in  std_logic;
    rst       : in  std_logic;
    in_valid  : in  std_logic;
    in_data   : in  signed({{dw_in}} - 1 downto 0);
    out_valid : out std_logic;
    out_data  : out signed({{dw_out}} - 1 downto 0)
  );
end entity;

architecture rtl of {{entity}} is
  type xbuf_t is array (0 to {{x_len}} - 1) of signed({{dw_in}} - 1 downto 0);
  type wrom_t is array (0 to {{w_len}} - 1) of integer;
  type brom_t is array (0 to {{b_len}} - 1) of integer;
  constant W_ROM : wrom_t := {{w_rom}};
  constant B_ROM : brom_t := {{b_rom}};
{{extra_decl}}  signal xbuf     : xbuf_t := (others => (others => '0'));
  signal loading  : boolean := true;
  signal load_cnt : integer range 0 to {{x_len}} := 0;
  signal row      : integer range 0 to {{n_rows}} := 0;
  signal col      : integer range 0 to {{out_dim}} := 0;
  signal inner    : integer range 0 to {{in_dim}} := 0;
  signal acc      : integer := 0;
begin
  process(clk)
    variable acc_v : integer;
    variable code  : integer;
  begin
    if rising_edge(clk) then
      out_valid <= '0';
      if rst = '1' then
        loading  <= true;
        load_cnt <= 0;
        row <= 0; col <= 0; inner <= 0;
      elsif loading then
        if in_valid = '1' then
          xbuf(load_cnt) <= in_data;
          if load_cnt = {{x_len}} - 1 then
            load_cnt <= 0;
            row <= 0; col <= 0; inner <= 0;
            loading  <= false;
          else
            load_cnt <= load_cnt + 1;
          end if;
        end if;
      else
        -- one multiply-accumulate per cycle
        acc_v := (to_integer(xbuf(row * {{in_dim}} + inner)) - ({{zx}}))
                 * (W_ROM(inner * {{out_dim}} + col) - ({{zw}}));
        if inner = 0 then
          acc_v := acc_v + B_ROM(col);
        else
          acc_v := acc_v + acc;
        end if;
        acc <= acc_v;
        if inner = {{in_dim}} - 1 then
          inner <= 0;
          {{emit_expr}}
          out_data  <= to_signed(code, {{dw_out}});
          out_valid <= '1';
          if col = {{out_dim}} - 1 then
            col <= 0;
            if row = {{n_rows}} - 1 then
              row     <= 0;
              loading <= true;
            else
              row <= row + 1;
            end if;
          else
            col <= col + 1;
          end if;
        else
          inner <= inner + 1;
        end if;
      end if;
    end if;
  end process;
end architecture;
)";

// Attention score / value-mix stage: two buffered operand streams, then a
// sequential MAC over the shared dimension. {{a_index}} / {{b_index}}
// select the operand layout (K is walked transposed for scores).
inline constexpr const char* kMatmulTemplate = R"(-- {{banner}}
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;
use work.qf_pkg.all;

entity {{entity}} is
  port (
    clk       : in  std_logic;
    rst       : in  std_logic;
    a_valid   : in  std_logic;
    a_data    : in  signed({{dw_in}} - 1 downto 0);
    b_valid   : in  std_logic;
    b_data    : in  signed({{dw_in}} - 1 downto 0);
    out_valid : out std_logic;
    out_data  : out signed({{dw_out}} - 1 downto 0)
  );
end entity;

architecture rtl of {{entity}} is
  type abuf_t is array (0 to {{a_len}} - 1) of signed({{dw_in}} - 1 downto 0);
  type bbuf_t is array (0 to {{b_len}} - 1) of signed({{dw_in}} - 1 downto 0);
  signal abuf  : abuf_t := (others => (others => '0'));
  signal bbuf  : bbuf_t := (others => (others => '0'));
  signal a_cnt : integer range 0 to {{a_len}} := 0;
  signal b_cnt : integer range 0 to {{b_len}} := 0;
  signal a_done, b_done : boolean := false;
  signal row   : integer range 0 to {{rows}} := 0;
  signal col   : integer range 0 to {{cols}} := 0;
  signal inner : integer range 0 to {{inner_dim}} := 0;
  signal acc   : integer := 0;
begin
  process(clk)
    variable acc_v : integer;
    variable code  : integer;
  begin
    if rising_edge(clk) then
      out_valid <= '0';
      if rst = '1' then
        a_cnt <= 0; b_cnt <= 0;
        a_done <= false; b_done <= false;
        row <= 0; col <= 0; inner <= 0;
      elsif not (a_done and b_done) then
        if a_valid = '1' and not a_done then
          abuf(a_cnt) <= a_data;
          if a_cnt = {{a_len}} - 1 then a_done <= true; a_cnt <= 0;
          else a_cnt <= a_cnt + 1; end if;
        end if;
        if b_valid = '1' and not b_done then
          bbuf(b_cnt) <= b_data;
          if b_cnt = {{b_len}} - 1 then b_done <= true; b_cnt <= 0;
          else b_cnt <= b_cnt + 1; end if;
        end if;
      else
        acc_v := (to_integer(abuf({{a_index}})) - ({{za}}))
                 * (to_integer(bbuf({{b_index}})) - ({{zb}}));
        if inner /= 0 then
          acc_v := acc_v + acc;
        end if;
        acc <= acc_v;
        if inner = {{inner_dim}} - 1 then
          inner <= 0;
          code := requant(acc_v, {{m}}, {{shift}}, {{zp}}, {{qmin}}, {{qmax}});
          out_data  <= to_signed(code, {{dw_out}});
          out_valid <= '1';
          if col = {{cols}} - 1 then
            col <= 0;
            if row = {{rows}} - 1 then
              row <= 0;
              a_done <= false;
              b_done <= false;
            else
              row <= row + 1;
            end if;
          else
            col <= col + 1;
          end if;
        else
          inner <= inner + 1;
        end if;
      end if;
    end if;
  end process;
end architecture;
)";

// Fixed-point softmax stage: per row, three passes of one element per
// cycle — convert to fixed point tracking the max, exponentiate through
// the 2^x fraction table, then normalize and recode.
inline constexpr const char* kSoftmaxTemplate = R"(-- {{banner}}
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;
use work.qf_pkg.all;

entity {{entity}} is
  port (
    clk       : in  std_logic;
    rst       : in  std_logic;
    in_valid  : in  std_logic;
    in_data   : in  signed({{dw_in}} - 1 downto 0);
    out_valid : out std_logic;
    out_data  : out signed({{dw_out}} - 1 downto 0)
  );
end entity;

architecture rtl of {{entity}} is
  constant N : integer := {{n}};
  constant TWO_F : integer := {{two_f}};
  type sbuf_t is array (0 to N * N - 1) of signed({{dw_in}} - 1 downto 0);
  type row_t is array (0 to N - 1) of integer;
  type lut_t is array (0 to TWO_F - 1) of integer;
  constant EXP2_LUT : lut_t := {{lut_rom}};
  signal sbuf : sbuf_t := (others => (others => '0'));
  signal p_fx : row_t := (others => 0);
  signal e_fx : row_t := (others => 0);
  type state_t is (s_load, s_convert, s_exp, s_emit);
  signal state : state_t := s_load;
  signal load_cnt : integer range 0 to N * N := 0;
  signal row : integer range 0 to N := 0;
  signal col : integer range 0 to N := 0;
  signal pmax : integer := 0;
  signal esum : integer := 0;
begin
  process(clk)
    variable p_v    : integer;
    variable t_v    : integer;
    variable down_v : integer;
    variable e_v    : integer;
    variable code   : integer;
  begin
    if rising_edge(clk) then
      out_valid <= '0';
      if rst = '1' then
        state <= s_load;
        load_cnt <= 0; row <= 0; col <= 0;
      else
        case state is
          when s_load =>
            if in_valid = '1' then
              sbuf(load_cnt) <= in_data;
              if load_cnt = N * N - 1 then
                load_cnt <= 0;
                row <= 0; col <= 0;
                state <= s_convert;
              else
                load_cnt <= load_cnt + 1;
              end if;
            end if;
          when s_convert =>
            p_v := requant_raw(to_integer(sbuf(row * N + col)) - ({{z_in}}), {{m_in}}, {{s_in}});
            p_fx(col) <= p_v;
            if col = 0 or p_v > pmax then
              pmax <= p_v;
            end if;
            if col = N - 1 then
              col <= 0;
              esum <= 0;
              state <= s_exp;
            else
              col <= col + 1;
            end if;
          when s_exp =>
            t_v := p_fx(col) - pmax;               -- <= 0
            down_v := -floor_div(t_v, TWO_F);      -- integer part of -t / 2^f
            if down_v > 30 then
              e_v := 0;
            else
              e_v := to_integer(shift_right(to_signed(EXP2_LUT(t_v mod TWO_F), 32), down_v));
            end if;
            e_fx(col) <= e_v;
            esum <= esum + e_v;
            if col = N - 1 then
              col <= 0;
              state <= s_emit;
            else
              col <= col + 1;
            end if;
          when s_emit =>
            code := requant((e_fx(col) * TWO_F) / esum, {{m_out}}, {{s_out}},
                            {{zp_out}}, {{qmin}}, {{qmax}});
            out_data  <= to_signed(code, {{dw_out}});
            out_valid <= '1';
            if col = N - 1 then
              col <= 0;
              if row = N - 1 then
                row <= 0;
                state <= s_load;
              else
                row <= row + 1;
                state <= s_convert;
              end if;
            else
              col <= col + 1;
            end if;
        end case;
      end if;
    end if;
  end process;
end architecture;
)";

// Residual-merge stage: the first operand stream is buffered, the second is
// rescaled and combined on the fly.
inline constexpr const char* kResidualTemplate = R"(-- {{banner}}
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;
use work.qf_pkg.all;

entity {{entity}} is
  port (
    clk       : in  std_logic;
    rst       : in  std_logic;
    a_valid   : in  std_logic;
    a_data    : in  signed({{dw_in}} - 1 downto 0);
    b_valid   : in  std_logic;
    b_data    : in  signed({{dw_in}} - 1 downto 0);
    out_valid : out std_logic;
    out_data  : out signed({{dw_out}} - 1 downto 0)
  );
end entity;

architecture rtl of {{entity}} is
  constant LEN : integer := {{len}};
  type abuf_t is array (0 to LEN - 1) of signed({{dw_in}} - 1 downto 0);
  signal abuf  : abuf_t := (others => (others => '0'));
  signal a_cnt : integer range 0 to LEN := 0;
  signal b_cnt : integer range 0 to LEN := 0;
  signal a_done : boolean := false;
begin
  process(clk)
    variable ra, rb, code : integer;
  begin
    if rising_edge(clk) then
      out_valid <= '0';
      if rst = '1' then
        a_cnt <= 0; b_cnt <= 0;
        a_done <= false;
      else
        if a_valid = '1' and not a_done then
          abuf(a_cnt) <= a_data;
          if a_cnt = LEN - 1 then a_done <= true; a_cnt <= 0;
          else a_cnt <= a_cnt + 1; end if;
        end if;
        if b_valid = '1' and a_done then
          ra := requant(to_integer(abuf(b_cnt)) - ({{za}}), {{ma}}, {{sa}},
                        {{zp}}, {{qmin}}, {{qmax}});
          rb := requant(to_integer(b_data) - ({{zb}}), {{mb}}, {{sb}},
                        {{zp}}, {{qmin}}, {{qmax}});
          code := sat_add(ra, rb, {{zp}}, {{qmin}}, {{qmax}});
          out_data  <= to_signed(code, {{dw_out}});
          out_valid <= '1';
          if b_cnt = LEN - 1 then
            b_cnt <= 0;
            a_done <= false;
          else
            b_cnt <= b_cnt + 1;
          end if;
        end if;
      end if;
    end if;
  end process;
end architecture;
)";

// Folded BatchNorm: stateless per-element per-channel multiply/shift/offset.
inline constexpr const char* kBatchNormTemplate = R"(-- {{banner}}
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;
use work.qf_pkg.all;

entity {{entity}} is
  port (
    clk       : in  std_logic;
    rst       : in  std_logic;
    in_valid  : in  std_logic;
    in_data   : in  signed({{dw_in}} - 1 downto 0);
    out_valid : out std_logic;
    out_data  : out signed({{dw_out}} - 1 downto 0)
  );
end entity;

architecture rtl of {{entity}} is
  constant D : integer := {{d}};
  type crom_t is array (0 to D - 1) of integer;
  constant MULT_ROM   : crom_t := {{mult_rom}};
  constant SHIFT_ROM  : crom_t := {{shift_rom}};
  constant OFFSET_ROM : crom_t := {{offset_rom}};
  signal chan : integer range 0 to D := 0;
begin
  process(clk)
    variable code : integer;
  begin
    if rising_edge(clk) then
      out_valid <= '0';
      if rst = '1' then
        chan <= 0;
      elsif in_valid = '1' then
        code := requant_bn(to_integer(in_data) - ({{z_in}}), MULT_ROM(chan),
                           OFFSET_ROM(chan), SHIFT_ROM(chan), {{zp_out}},
                           {{qmin}}, {{qmax}});
        out_data  <= to_signed(code, {{dw_out}});
        out_valid <= '1';
        if chan = D - 1 then chan <= 0;
        else chan <= chan + 1; end if;
      end if;
    end if;
  end process;
end architecture;
)";

// Integer global average pool: per-channel running sums during the input
// stream, then one round-half-up divide per channel.
inline constexpr const char* kGapTemplate = R"(-- {{banner}}
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;
use work.qf_pkg.all;

entity {{entity}} is
  port (
    clk       : in  std_logic;
    rst       : in  std_logic;
    in_valid  : in  std_logic;
    in_data   : in  signed({{dw_in}} - 1 downto 0);
    out_valid : out std_logic;
    out_data  : out signed({{dw_out}} - 1 downto 0)
  );
end entity;

architecture rtl of {{entity}} is
  constant N : integer := {{n_rows}};
  constant D : integer := {{d}};
  type sums_t is array (0 to D - 1) of integer;
  signal sums : sums_t := (others => 0);
  signal in_cnt : integer range 0 to N * D := 0;
  signal emit_cnt : integer range 0 to D := 0;
  signal emitting : boolean := false;
begin
  process(clk)
    variable code : integer;
  begin
    if rising_edge(clk) then
      out_valid <= '0';
      if rst = '1' then
        sums <= (others => 0);
        in_cnt <= 0; emit_cnt <= 0;
        emitting <= false;
      elsif not emitting then
        if in_valid = '1' then
          sums(in_cnt mod D) <= sums(in_cnt mod D) + to_integer(in_data);
          if in_cnt = N * D - 1 then
            in_cnt <= 0;
            emitting <= true;
            emit_cnt <= 0;
          else
            in_cnt <= in_cnt + 1;
          end if;
        end if;
      else
        code := requant(floor_div(sums(emit_cnt) + {{n_half}}, N) - ({{z_in}}),
                        {{m}}, {{shift}}, {{zp}}, {{qmin}}, {{qmax}});
        out_data  <= to_signed(code, {{dw_out}});
        out_valid <= '1';
        sums(emit_cnt) <= 0;
        if emit_cnt = D - 1 then
          emitting <= false;
        else
          emit_cnt <= emit_cnt + 1;
        end if;
      end if;
    end if;
  end process;
end architecture;
)";

// ---- emission ------------------------------------------------------------------

namespace detail {

inline std::string banner(const IntModel& im, const std::string& what) {
    return "qforge generated " + what + " (config " +
           config_hash(im.config) + ", " + std::to_string(im.config.bits) + "-bit)";
}

inline void plan_vars(std::map<std::string, std::string>& vars, const RequantPlan& plan,
                      const char* m_key = "m", const char* s_key = "shift",
                      const char* zp_key = "zp") {
    vars[m_key] = num(plan.multiplier);
    vars[s_key] = num(plan.shift);
    vars[zp_key] = num(plan.out.zero_point);
    vars["qmin"] = num(plan.out.qmin());
    vars["qmax"] = num(plan.out.qmax());
}

}  // namespace detail

enum class LinearEmitKind { plain, embed_with_pe, relu };

// One quantized layer -> one VHDL entity with baked ROMs and requant
// constants. Semantics match int_linear by sharing the plan constants and
// the package's requant function.
inline RtlFile emit_linear_layer(const IntModel& im, const std::string& name,
                                 const IntLinear& layer, const QuantParams& in_qp,
                                 std::size_t n_rows, LinearEmitKind kind) {
    std::map<std::string, std::string> vars;
    vars["banner"] = detail::banner(im, "linear stage " + name);
    vars["entity"] = "qf_" + name;
    vars["in_dim"] = detail::num(static_cast<std::int64_t>(layer.in_dim));
    vars["out_dim"] = detail::num(static_cast<std::int64_t>(layer.out_dim));
    vars["n_rows"] = detail::num(static_cast<std::int64_t>(n_rows));
    vars["x_len"] = detail::num(static_cast<std::int64_t>(n_rows * layer.in_dim));
    vars["w_len"] = detail::num(static_cast<std::int64_t>(layer.weights.size()));
    vars["b_len"] = detail::num(static_cast<std::int64_t>(layer.bias.size()));
    vars["dw_in"] = detail::num(in_qp.bits);
    vars["dw_out"] = detail::num(layer.plan.out.bits);
    vars["w_rom"] = detail::int_list(layer.weights);
    vars["b_rom"] = detail::int_list(layer.bias);
    vars["zx"] = detail::num(in_qp.zero_point);
    vars["zw"] = detail::num(layer.w_qp.zero_point);
    detail::plan_vars(vars, layer.plan);

    std::string extra;
    std::string emit_expr =
        "code := requant(acc_v, {{m}}, {{shift}}, {{zp}}, {{qmin}}, {{qmax}});";
    if (kind == LinearEmitKind::embed_with_pe) {
        extra = "  type perom_t is array (0 to " + std::to_string(im.pe_codes.size() - 1) +
                ") of integer;\n  constant PE_ROM : perom_t := " +
                detail::int_list(im.pe_codes) + ";\n";
        emit_expr =
            "code := requant(acc_v, {{m}}, {{shift}}, {{zp}}, {{qmin}}, {{qmax}});\n"
            "          code := sat_add(code, PE_ROM(row * {{out_dim}} + col), {{zp}}, "
            "{{qmin}}, {{qmax}});";
    } else if (kind == LinearEmitKind::relu) {
        emit_expr =
            "code := requant(acc_v, {{m}}, {{shift}}, {{zp}}, {{qmin}}, {{qmax}});\n"
            "          if code < " +
            std::to_string(im.ffn_relu_floor) + " then code := " +
            std::to_string(im.ffn_relu_floor) + "; end if;";
    }
    vars["extra_decl"] = extra;
    vars["emit_expr"] = render_template(emit_expr, vars);
    return {"qf_" + name + ".vhd", render_template(kLinearTemplate, vars)};
}

inline RtlFile emit_scores_layer(const IntModel& im) {
    const std::size_t n = im.config.window, d = im.config.d_model;
    std::map<std::string, std::string> vars;
    vars["banner"] = detail::banner(im, "attention score stage");
    vars["entity"] = "qf_scores";
    vars["dw_in"] = detail::num(im.q_qp.bits);
    vars["dw_out"] = detail::num(im.scores_qp.bits);
    vars["a_len"] = detail::num(static_cast<std::int64_t>(n * d));
    vars["b_len"] = detail::num(static_cast<std::int64_t>(n * d));
    vars["rows"] = detail::num(static_cast<std::int64_t>(n));
    vars["cols"] = detail::num(static_cast<std::int64_t>(n));
    vars["inner_dim"] = detail::num(static_cast<std::int64_t>(d));
    vars["a_index"] = "row * " + std::to_string(d) + " + inner";
    vars["b_index"] = "col * " + std::to_string(d) + " + inner";  // K walked transposed
    vars["za"] = detail::num(im.q_qp.zero_point);
    vars["zb"] = detail::num(im.k_qp.zero_point);
    detail::plan_vars(vars, im.scores_plan);
    return {"qf_scores.vhd", render_template(kMatmulTemplate, vars)};
}

inline RtlFile emit_mix_layer(const IntModel& im) {
    const std::size_t n = im.config.window, d = im.config.d_model;
    std::map<std::string, std::string> vars;
    vars["banner"] = detail::banner(im, "attention value-mix stage");
    vars["entity"] = "qf_mix";
    vars["dw_in"] = detail::num(im.attn_qp.bits);
    vars["dw_out"] = detail::num(im.mix_qp.bits);
    vars["a_len"] = detail::num(static_cast<std::int64_t>(n * n));
    vars["b_len"] = detail::num(static_cast<std::int64_t>(n * d));
    vars["rows"] = detail::num(static_cast<std::int64_t>(n));
    vars["cols"] = detail::num(static_cast<std::int64_t>(d));
    vars["inner_dim"] = detail::num(static_cast<std::int64_t>(n));
    vars["a_index"] = "row * " + std::to_string(n) + " + inner";
    vars["b_index"] = "inner * " + std::to_string(d) + " + col";
    vars["za"] = detail::num(im.attn_qp.zero_point);
    vars["zb"] = detail::num(im.v_qp.zero_point);
    detail::plan_vars(vars, im.mix_plan);
    return {"qf_mix.vhd", render_template(kMatmulTemplate, vars)};
}

inline RtlFile emit_softmax_layer(const IntModel& im) {
    std::map<std::string, std::string> vars;
    vars["banner"] = detail::banner(im, "integer softmax stage");
    vars["entity"] = "qf_softmax";
    vars["n"] = detail::num(static_cast<std::int64_t>(im.config.window));
    vars["two_f"] = detail::num(std::int64_t(1) << im.softmax.frac_bits);
    vars["dw_in"] = detail::num(im.scores_qp.bits);
    vars["dw_out"] = detail::num(im.attn_qp.bits);
    vars["lut_rom"] = detail::int_list(im.softmax.exp2_lut);
    vars["z_in"] = detail::num(im.softmax.in_qp.zero_point);
    vars["m_in"] = detail::num(im.softmax.in_plan.multiplier);
    vars["s_in"] = detail::num(im.softmax.in_plan.shift);
    vars["m_out"] = detail::num(im.softmax.out_plan.multiplier);
    vars["s_out"] = detail::num(im.softmax.out_plan.shift);
    vars["zp_out"] = detail::num(im.softmax.out_plan.out.zero_point);
    vars["qmin"] = detail::num(im.softmax.out_plan.out.qmin());
    vars["qmax"] = detail::num(im.softmax.out_plan.out.qmax());
    return {"qf_softmax.vhd", render_template(kSoftmaxTemplate, vars)};
}

inline RtlFile emit_residual_layer(const IntModel& im, const std::string& name,
                                   const CodeRescale& a, const CodeRescale& b,
                                   const QuantParams& dest_qp) {
    const std::size_t n = im.config.window, d = im.config.d_model;
    std::map<std::string, std::string> vars;
    vars["banner"] = detail::banner(im, "residual stage " + name);
    vars["entity"] = "qf_" + name;
    vars["len"] = detail::num(static_cast<std::int64_t>(n * d));
    vars["dw_in"] = detail::num(a.in_qp.bits);
    vars["dw_out"] = detail::num(dest_qp.bits);
    vars["za"] = detail::num(a.in_qp.zero_point);
    vars["zb"] = detail::num(b.in_qp.zero_point);
    vars["ma"] = detail::num(a.plan.multiplier);
    vars["sa"] = detail::num(a.plan.shift);
    vars["mb"] = detail::num(b.plan.multiplier);
    vars["sb"] = detail::num(b.plan.shift);
    vars["zp"] = detail::num(dest_qp.zero_point);
    vars["qmin"] = detail::num(dest_qp.qmin());
    vars["qmax"] = detail::num(dest_qp.qmax());
    return {"qf_" + name + ".vhd", render_template(kResidualTemplate, vars)};
}

inline RtlFile emit_batchnorm_layer(const IntModel& im, const std::string& name,
                                    const FoldedBatchNorm& bn) {
    std::map<std::string, std::string> vars;
    vars["banner"] = detail::banner(im, "folded batchnorm stage " + name);
    vars["entity"] = "qf_" + name;
    vars["d"] = detail::num(static_cast<std::int64_t>(im.config.d_model));
    vars["dw_in"] = detail::num(bn.in_qp.bits);
    vars["dw_out"] = detail::num(bn.out_qp.bits);
    vars["mult_rom"] = detail::int_list(bn.multiplier);
    vars["shift_rom"] = detail::int_list(bn.shift);
    vars["offset_rom"] = detail::int_list(bn.offset);
    vars["z_in"] = detail::num(bn.in_qp.zero_point);
    vars["zp_out"] = detail::num(bn.out_qp.zero_point);
    vars["qmin"] = detail::num(bn.out_qp.qmin());
    vars["qmax"] = detail::num(bn.out_qp.qmax());
    return {"qf_" + name + ".vhd", render_template(kBatchNormTemplate, vars)};
}

inline RtlFile emit_gap_layer(const IntModel& im) {
    const std::size_t n = im.config.window;
    std::map<std::string, std::string> vars;
    vars["banner"] = detail::banner(im, "global average pool stage");
    vars["entity"] = "qf_gap";
    vars["n_rows"] = detail::num(static_cast<std::int64_t>(n));
    vars["d"] = detail::num(static_cast<std::int64_t>(im.config.d_model));
    vars["n_half"] = detail::num(static_cast<std::int64_t>(n / 2));
    vars["dw_in"] = detail::num(im.bn2_qp.bits);
    vars["dw_out"] = detail::num(im.gap_qp.bits);
    vars["z_in"] = detail::num(im.bn2_qp.zero_point);
    detail::plan_vars(vars, im.gap_rescale.plan);
    return {"qf_gap.vhd", render_template(kGapTemplate, vars)};
}

// Stage descriptors in pipeline order: entity name plus stream wiring used
// by the top-level integration.
struct StageWiring {
    std::string entity;
    std::string a_src;  // signal prefix feeding port in/a
    std::string b_src;  // second operand, empty for single-input stages
};

inline std::vector<StageWiring> stage_wiring() {
    return {
        {"qf_embed", "top_in", ""},
        {"qf_q_proj", "embed", ""},
        {"qf_k_proj", "embed", ""},
        {"qf_v_proj", "embed", ""},
        {"qf_scores", "q_proj", "k_proj"},
        {"qf_softmax", "scores", ""},
        {"qf_mix", "softmax", "v_proj"},
        {"qf_attn_out", "mix", ""},
        {"qf_res1", "embed", "attn_out"},
        {"qf_bn1", "res1", ""},
        {"qf_ffn_up", "bn1", ""},
        {"qf_ffn_down", "ffn_up", ""},
        {"qf_res2", "bn1", "ffn_down"},
        {"qf_bn2", "res2", ""},
        {"qf_gap", "bn2", ""},
        {"qf_out_proj", "gap", ""},
    };
}

// Top-level entity: instantiates every stage and chains the valid/data
// streams; the graph is acyclic by construction of the wiring table.
inline RtlFile emit_top(const IntModel& im) {
    const int bits = im.config.bits;
    std::ostringstream os;
    os << "-- " << detail::banner(im, "top-level integration") << "\n";
    os << "library ieee;\nuse ieee.std_logic_1164.all;\nuse ieee.numeric_std.all;\n\n";
    os << "entity qf_top is\n  port (\n"
       << "    clk       : in  std_logic;\n"
       << "    rst       : in  std_logic;\n"
       << "    in_valid  : in  std_logic;\n"
       << "    in_data   : in  signed(" << bits - 1 << " downto 0);\n"
       << "    out_valid : out std_logic;\n"
       << "    out_data  : out signed(" << bits - 1 << " downto 0)\n"
       << "  );\nend entity;\n\n";
    os << "architecture rtl of qf_top is\n";
    const auto stages = stage_wiring();
    for (const auto& st : stages) {
        const std::string base = st.entity.substr(3);  // drop qf_
        os << "  signal " << base << "_valid : std_logic;\n";
        os << "  signal " << base << "_data  : signed(" << bits - 1 << " downto 0);\n";
    }
    os << "begin\n";
    for (const auto& st : stages) {
        const std::string base = st.entity.substr(3);
        auto src_valid = [](const std::string& s) {
            return s == "top_in" ? std::string("in_valid") : s + "_valid";
        };
        auto src_data = [](const std::string& s) {
            return s == "top_in" ? std::string("in_data") : s + "_data";
        };
        os << "  u_" << base << " : entity work." << st.entity << "\n    port map (\n"
           << "      clk => clk, rst => rst,\n";
        if (st.b_src.empty()) {
            os << "      in_valid => " << src_valid(st.a_src) << ", in_data => "
               << src_data(st.a_src) << ",\n";
        } else {
            os << "      a_valid => " << src_valid(st.a_src) << ", a_data => "
               << src_data(st.a_src) << ",\n"
               << "      b_valid => " << src_valid(st.b_src) << ", b_data => "
               << src_data(st.b_src) << ",\n";
        }
        os << "      out_valid => " << base << "_valid, out_data => " << base << "_data\n"
           << "    );\n";
    }
    os << "  out_valid <= out_proj_valid;\n  out_data  <= out_proj_data;\n";
    os << "end architecture;\n";
    return {"qf_top.vhd", os.str()};
}

// File-driven testbench: feeds quantized input vectors, compares every
// output code for exact integer equality and reports one line per vector
// plus a final QF_RESULT line with the total cycle count.
inline constexpr const char* kTestbenchTemplate = R"(-- {{banner}}
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;
use std.textio.all;

entity qf_tb is
end entity;

architecture sim of qf_tb is
  signal clk : std_logic := '0';
  signal rst : std_logic := '1';
  signal in_valid : std_logic := '0';
  signal in_data : signed({{bw}} - 1 downto 0) := (others => '0');
  signal out_valid : std_logic;
  signal out_data : signed({{bw}} - 1 downto 0);
  signal done : boolean := false;
  signal cycles : integer := 0;
begin
  clock : process
  begin
    while not done loop
      clk <= '0';
      wait for {{half_period_ns}} ns;
      clk <= '1';
      wait for {{half_period_ns}} ns;
    end loop;
    wait;
  end process;

  counter : process(clk)
  begin
    if rising_edge(clk) and rst = '0' then
      cycles <= cycles + 1;
    end if;
  end process;

  dut : entity work.qf_top
    port map (clk => clk, rst => rst, in_valid => in_valid, in_data => in_data,
              out_valid => out_valid, out_data => out_data);

  stimulus : process
    file fin : text open read_mode is "vectors_in.txt";
    file fexp : text open read_mode is "vectors_out.txt";
    variable l : line;
    variable v : integer;
    variable mismatches : integer := 0;
    variable vec_fail : boolean;
  begin
    wait for {{half_period_ns}} ns;
    wait until rising_edge(clk);
    rst <= '0';
    wait until rising_edge(clk);
    for vec in 0 to {{n_vectors}} - 1 loop
      vec_fail := false;
      for i in 0 to {{in_len}} - 1 loop
        readline(fin, l);
        read(l, v);
        in_data <= to_signed(v, {{bw}});
        in_valid <= '1';
        wait until rising_edge(clk);
      end loop;
      in_valid <= '0';
      for o in 0 to {{out_len}} - 1 loop
        loop
          wait until rising_edge(clk);
          exit when out_valid = '1';
        end loop;
        readline(fexp, l);
        read(l, v);
        if to_integer(out_data) /= v then
          mismatches := mismatches + 1;
          vec_fail := true;
          report "VECTOR " & integer'image(vec) & " output " & integer'image(o)
            & " got " & integer'image(to_integer(out_data))
            & " expected " & integer'image(v) severity error;
        end if;
      end loop;
      if vec_fail then
        report "VECTOR " & integer'image(vec) & " FAIL" severity note;
      else
        report "VECTOR " & integer'image(vec) & " PASS" severity note;
      end if;
    end loop;
    if mismatches = 0 then
      report "QF_RESULT: PASS cycles=" & integer'image(cycles) severity note;
    else
      report "QF_RESULT: FAIL mismatches=" & integer'image(mismatches) severity note;
    end if;
    done <= true;
    wait;
  end process;
end architecture;
)";

inline RtlFile emit_testbench(const IntModel& im, const GoldenVectors& vectors,
                              const PlatformSpec& platform) {
    if (vectors.count == 0) throw CodegenError("emit_testbench: golden vectors required");
    std::map<std::string, std::string> vars;
    vars["banner"] = detail::banner(im, "testbench");
    vars["bw"] = detail::num(im.config.bits);
    vars["n_vectors"] = detail::num(static_cast<std::int64_t>(vectors.count));
    vars["in_len"] = detail::num(static_cast<std::int64_t>(im.config.window * im.config.features));
    vars["out_len"] = detail::num(static_cast<std::int64_t>(im.config.outputs));
    const double half_ns = 0.5e9 / platform.clock_hz;
    std::ostringstream hp;
    hp.precision(6);
    hp << half_ns;
    vars["half_period_ns"] = hp.str();
    return {"qf_tb.vhd", render_template(kTestbenchTemplate, vars)};
}

inline std::vector<RtlFile> emit_constraints(const PlatformSpec& platform) {
    const double period_ns = 1e9 / platform.clock_hz;
    std::ostringstream xdc, pdc;
    xdc.precision(6);
    pdc.precision(6);
    xdc << "# qforge clock constraint stub (" << platform.name << ")\n"
        << "create_clock -period " << period_ns << " -name clk [get_ports clk]\n";
    pdc << "# qforge clock constraint stub (" << platform.name << ")\n"
        << "create_clock -name {clk} -period " << period_ns << " [get_ports {clk}]\n";
    return {{"qf_top.xdc", xdc.str()}, {"qf_top.pdc", pdc.str()}};
}

inline std::vector<RtlFile> emit_vector_files(const GoldenVectors& vectors) {
    std::ostringstream in_os, out_os;
    for (const auto& vec : vectors.inputs)
        for (const std::int32_t v : vec) in_os << v << "\n";
    for (const auto& vec : vectors.outputs)
        for (const std::int32_t v : vec) out_os << v << "\n";
    return {{"vectors_in.txt", in_os.str()}, {"vectors_out.txt", out_os.str()}};
}

// Renders the complete design: package, one entity per pipeline stage, the
// top-level integration, the testbench, constraint stubs and golden
// vectors. Pure function of (IntModel, PlatformSpec, vectors).
inline RtlDesign emit_design(const IntModel& im, const PlatformSpec& platform,
                             const GoldenVectors& vectors) {
    RtlDesign design;
    design.top_entity = "qf_top";
    design.testbench_entity = "qf_tb";

    std::map<std::string, std::string> pkg_vars{{"banner", detail::banner(im, "shared package")}};
    design.vhdl_files.push_back({"qf_pkg.vhd", render_template(kPkgTemplate, pkg_vars)});

    const std::size_t n = im.config.window;
    design.vhdl_files.push_back(emit_linear_layer(im, "embed", im.embed, im.input_qp, n,
                                                  LinearEmitKind::embed_with_pe));
    design.vhdl_files.push_back(
        emit_linear_layer(im, "q_proj", im.q_proj, im.emb_qp, n, LinearEmitKind::plain));
    design.vhdl_files.push_back(
        emit_linear_layer(im, "k_proj", im.k_proj, im.emb_qp, n, LinearEmitKind::plain));
    design.vhdl_files.push_back(
        emit_linear_layer(im, "v_proj", im.v_proj, im.emb_qp, n, LinearEmitKind::plain));
    design.vhdl_files.push_back(emit_scores_layer(im));
    design.vhdl_files.push_back(emit_softmax_layer(im));
    design.vhdl_files.push_back(emit_mix_layer(im));
    design.vhdl_files.push_back(
        emit_linear_layer(im, "attn_out", im.attn_out, im.mix_qp, n, LinearEmitKind::plain));
    design.vhdl_files.push_back(emit_residual_layer(im, "res1", im.res1_a, im.res1_b, im.res1_qp));
    design.vhdl_files.push_back(emit_batchnorm_layer(im, "bn1", im.bn1));
    design.vhdl_files.push_back(
        emit_linear_layer(im, "ffn_up", im.ffn_up, im.bn1_qp, n, LinearEmitKind::relu));
    design.vhdl_files.push_back(emit_linear_layer(im, "ffn_down", im.ffn_down, im.ffn_hidden_qp, n,
                                                  LinearEmitKind::plain));
    design.vhdl_files.push_back(emit_residual_layer(im, "res2", im.res2_a, im.res2_b, im.res2_qp));
    design.vhdl_files.push_back(emit_batchnorm_layer(im, "bn2", im.bn2));
    design.vhdl_files.push_back(emit_gap_layer(im));
    design.vhdl_files.push_back(
        emit_linear_layer(im, "out_proj", im.out_proj, im.gap_qp, 1, LinearEmitKind::plain));
    design.stage_count = design.vhdl_files.size() - 1;  // minus package

    design.vhdl_files.push_back(emit_top(im));
    design.vhdl_files.push_back(emit_testbench(im, vectors, platform));
    design.constraint_files = emit_constraints(platform);
    design.vector_files = emit_vector_files(vectors);
    return design;
}

inline void write_design(const RtlDesign& design, const std::string& dir) {
    std::filesystem::create_directories(dir);
    auto write_all = [&](const std::vector<RtlFile>& files) {
        for (const RtlFile& f : files) {
            std::ofstream out(std::filesystem::path(dir) / f.name, std::ios::binary);
            if (!out) throw DataError("cannot write " + f.name + " under " + dir);
            out << f.content;
        }
    };
    write_all(design.vhdl_files);
    write_all(design.constraint_files);
    write_all(design.vector_files);
}

// ---- external simulation -------------------------------------------------------

enum class SimStatus { passed, failed, skipped };

struct SimResult {
    SimStatus status = SimStatus::skipped;
    std::string detail;
    std::uint64_t cycles = 0;
};

namespace detail {

inline int run_command(const std::string& cmd, std::string& output) {
    output.clear();
    FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
    if (pipe == nullptr) return -1;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe) != nullptr) output += buf;
    return ::pclose(pipe);
}

inline bool tool_available(const std::string& tool) {
    std::string out;
    return run_command("command -v " + tool, out) == 0 && !out.empty();
}

}  // namespace detail

// Runs GHDL over a written design directory. A missing simulator yields an
// explicit skipped status, never a silent pass; analysis or assertion
// failures carry the captured log.
inline SimResult run_external_sim(const RtlDesign& design, const std::string& dir,
                                  const std::string& ghdl = "ghdl") {
    if (!detail::tool_available(ghdl)) {
        return {SimStatus::skipped, "skipped(tool-missing): " + ghdl + " not on PATH", 0};
    }
    const std::string cd = "cd '" + dir + "' && ";
    std::string log;
    std::string files;
    for (const RtlFile& f : design.vhdl_files) files += "'" + f.name + "' ";
    if (detail::run_command(cd + ghdl + " -a --std=08 " + files, log) != 0)
        throw SimulationError("ghdl analysis failed:\n" + log);
    if (detail::run_command(cd + ghdl + " -e --std=08 " + design.testbench_entity, log) != 0)
        throw SimulationError("ghdl elaboration failed:\n" + log);
    const int rc =
        detail::run_command(cd + ghdl + " -r --std=08 " + design.testbench_entity +
                                " --assert-level=failure",
                            log);
    SimResult result;
    const std::size_t pass_pos = log.find("QF_RESULT: PASS cycles=");
    if (pass_pos != std::string::npos) {
        result.status = SimStatus::passed;
        result.cycles = std::strtoull(log.c_str() + pass_pos + 23, nullptr, 10);
        result.detail = "pass";
        return result;
    }
    if (log.find("QF_RESULT: FAIL") != std::string::npos) {
        result.status = SimStatus::failed;
        result.detail = log;
        return result;
    }
    throw SimulationError("simulator did not report a result (rc=" + std::to_string(rc) +
                          "):\n" + log);
}

}  // namespace qforge
