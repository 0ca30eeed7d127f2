"""OSC 1.0 trigger messages: address, ",if" type tags, int32 label, float32 probability."""
import asyncio
import logging
import struct

from .errors import UsageError
from .settings import parse_hostport

logger = logging.getLogger(__name__)

TYPE_TAGS = ",if"


class OscAddressError(UsageError):
    pass


def _padded(text: bytes) -> bytes:
    # at least one NUL, then up to the next multiple of 4
    return text + b"\x00" * (4 - len(text) % 4)


def encode_osc(address: str, label: int, probability: float) -> bytes:
    if not address.startswith("/"):
        raise OscAddressError(f"OSC address must start with '/', got '{address}'")
    if "\x00" in address:
        raise OscAddressError("OSC address must not contain NUL")
    return (
        _padded(address.encode("ascii"))
        + _padded(TYPE_TAGS.encode("ascii"))
        + struct.pack(">i", label)
        + struct.pack(">f", probability)
    )


class OscEmitter:
    """Fire-and-forget UDP sender; one whole datagram per trigger."""

    def __init__(self, target: str, default_address: str = "/motion", cue_map: dict[int, str] | None = None):
        self.host, self.port = parse_hostport(target)
        self.default_address = default_address
        self.cue_map = dict(cue_map or {})
        self.sent = 0
        self._transport: asyncio.DatagramTransport | None = None

    def address_for(self, label: int) -> str:
        return self.cue_map.get(label, self.default_address)

    async def open(self) -> None:
        loop = asyncio.get_running_loop()
        self._transport, _ = await loop.create_datagram_endpoint(
            asyncio.DatagramProtocol, remote_addr=(self.host, self.port)
        )
        logger.info(f"🎛️ OSC triggers -> {self.host}:{self.port}")

    def send(self, label: int, probability: float) -> bytes:
        datagram = encode_osc(self.address_for(label), label, probability)
        if self._transport is not None:
            self._transport.sendto(datagram)
            self.sent += 1
        return datagram

    def close(self) -> None:
        if self._transport is not None:
            self._transport.close()
            self._transport = None
