from pathlib import Path

from common.exceptions import ConfigurationError
from common.files import atomic_write
from streams.config import Control, TaskConfig
from streams.generator import TokenStream

EMPTY_TAPE = "-"


def format_stream_dump(stream: TokenStream) -> str:
    lines = [
        f"{i}\t{symbol}\t{EMPTY_TAPE if token is None else token.value}"
        for i, (symbol, token) in enumerate(zip(stream.symbols, stream.tape))
    ]
    return "\n".join(lines) + "\n"


def write_stream_dump(stream: TokenStream, path) -> Path:
    return atomic_write(path, format_stream_dump(stream))


def read_stream_dump(path, config: TaskConfig) -> TokenStream:
    symbols, tape = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            index, symbol, token = line.split("\t")
        except ValueError:
            raise ConfigurationError(f"{path}:{lineno}: expected 'index<TAB>symbol<TAB>tape'") from None
        try:
            position, value = int(index), int(symbol)
        except ValueError:
            raise ConfigurationError(f"{path}:{lineno}: index and symbol must be integers, got {line!r}") from None
        if position != len(symbols):
            raise ConfigurationError(f"{path}:{lineno}: index {index} out of sequence")
        try:
            control = None if token == EMPTY_TAPE else Control(token)
        except ValueError:
            raise ConfigurationError(f"{path}:{lineno}: unknown tape token {token!r}") from None
        symbols.append(value)
        tape.append(control)
    return TokenStream(config=config, symbols=tuple(symbols), tape=tuple(tape))
