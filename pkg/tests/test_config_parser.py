from pathlib import Path

import pytest

from eqsim.compound import (
    ConfigError,
    ConfigParseError,
    PhasePeriod,
    PixelParam,
    Range,
    SubpixelParam,
    Viewport,
    parse_config,
    pretty_print,
)

FIXTURES = Path(__file__).parent / "fixtures"
ALL_FIXTURES = sorted(FIXTURES.glob("*.eqc"))


def load(name: str) -> str:
    return (FIXTURES / name).read_text()


def test_dplex_listing_parses():
    cfg = parse_config(load("dplex.eqc"))
    root = cfg.compounds[0]
    assert root.channel == "destination"
    assert [c.phase_period for c in root.children] == [
        PhasePeriod(0, 3),
        PhasePeriod(1, 3),
        PhasePeriod(2, 3),
    ]
    assert root.equalizers[0].kind == "framerate"
    assert root.input_frames[0].name == "frame"


def test_tiles_listing_parses():
    cfg = parse_config(load("tiles.eqc"))
    root = cfg.compounds[0]
    assert root.output_tiles[0].name == "queue"
    assert root.output_tiles[0].size == (64, 64)
    assert [c.input_tiles for c in root.children] == [["queue"]] * 4
    # unnamed output frames default to frame.<channel>
    assert root.children[1].output_frames[0].name == "frame.source1"


def test_pixel_listing_parses():
    cfg = parse_config(load("pixel.eqc"))
    root = cfg.compounds[0]
    assert root.children[0].pixel == PixelParam(0, 0, 3, 1)
    assert root.children[1].pixel == PixelParam(1, 0, 3, 1)
    assert root.children[2].pixel == PixelParam(2, 0, 3, 1)
    assert root.children[0].output_frames[0].local_transfer  # type texture


def test_subpixel_listing_parses_with_partition_warning():
    cfg = parse_config(load("subpixel.eqc"))
    root = cfg.compounds[0]
    assert root.children[0].subpixel == SubpixelParam(0, 3)
    # the listing carries duplicate indices; parser accepts, validation warns
    assert root.children[1].subpixel == root.children[2].subpixel == SubpixelParam(1, 3)
    assert any("partition" in w for w in cfg.warnings)


def test_empty_compound_defaults():
    cfg = parse_config('compound { channel "c" }')
    root = cfg.compounds[0]
    assert root.is_leaf
    assert root.viewport == Viewport(0, 0, 1, 1)
    assert root.range_ == Range(0, 1)


def test_display_wall_fixture():
    cfg = parse_config(load("display_wall.eqc"))
    assert cfg.latency == 3
    canvas = cfg.canvases[0]
    assert len(canvas.segments) == 4
    assert canvas.wall is not None
    layout = cfg.layout("quad")
    assert len(layout.views) == 4
    eq = cfg.compounds[0].equalizers[0]
    assert eq.kind == "load"
    assert eq.params["mode"] == "2D"
    assert eq.params["damping"] == 0.5
    assert eq.params["boundary"] == [8, 8]


def test_unknown_keys_warn_not_fail():
    cfg = parse_config('compound { channel "c" shinynewknob 42 }')
    assert any("shinynewknob" in w for w in cfg.warnings)


def test_observer_vr_keys_warn():
    cfg = parse_config('observer { name "o" eye_base 0.06 }')
    assert any("out of scope" in w for w in cfg.warnings)


def test_unbalanced_braces_error_position():
    with pytest.raises(ConfigParseError, match="line"):
        parse_config('compound { channel "c" ')
    with pytest.raises(ConfigParseError):
        parse_config("compound { } }")


def test_malformed_array_rejected():
    with pytest.raises(ConfigParseError):
        parse_config('compound { channel "c" viewport [ 0 0 1 }')


def test_invariant_violations_are_parse_errors():
    with pytest.raises(ConfigError):
        parse_config('compound { channel "c" viewport [ 0 0 0 1 ] }')  # zero width
    with pytest.raises(ConfigError):
        parse_config('compound { channel "c" range [ 0.5 0.2 ] }')
    with pytest.raises(ConfigError):
        parse_config('compound { channel "c" pixel [ 3 0 3 1 ] }')
    with pytest.raises(ConfigError):
        parse_config('compound { channel "c" subpixel [ 3 3 ] }')


def test_leaf_without_channel_rejected():
    with pytest.raises(ConfigError, match="channel"):
        parse_config("compound { viewport [ 0.0 0.0 1.0 1.0 ] }")


def test_input_frame_without_producer_rejected():
    with pytest.raises(ConfigError, match="no producer"):
        parse_config('compound { channel "c" inputframe { name "ghost" } }')


def test_simultaneous_duplicate_producers_rejected():
    text = """
    compound {
      channel "d"
      compound { channel "a" outputframe { name "f" } }
      compound { channel "b" outputframe { name "f" } }
      inputframe { name "f" }
    }
    """
    with pytest.raises(ConfigError, match="simultaneous"):
        parse_config(text)


def test_comments_ignored():
    cfg = parse_config('# a comment\ncompound { channel "c" } # trailing\n')
    assert cfg.compounds[0].channel == "c"


@pytest.mark.parametrize("path", ALL_FIXTURES, ids=lambda p: p.stem)
def test_pretty_print_parse_fixpoint(path):
    cfg = parse_config(path.read_text())
    printed = pretty_print(cfg)
    reparsed = parse_config(printed)
    assert reparsed == cfg
    # and printing again is stable
    assert pretty_print(reparsed) == printed
