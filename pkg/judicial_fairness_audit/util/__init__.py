import hashlib
import json
import os
import tempfile
import typing
from pathlib import Path


class SlotsRepr:
	__slots__ = ()

	@classmethod
	def _allSlots(cls) -> typing.Tuple[str, ...]:
		res = []
		for klass in reversed(cls.__mro__):
			for k in getattr(klass, "__slots__", ()):
				if k not in res:
					res.append(k)
		return tuple(res)

	def __repr__(self) -> str:
		return self.__class__.__name__ + "(" + ", ".join(k + "=" + repr(getattr(self, k, None)) for k in self.__class__._allSlots()) + ")"

	def __eq__(self, other) -> bool:
		if other.__class__ is not self.__class__:
			return NotImplemented
		return all(getattr(self, k, None) == getattr(other, k, None) for k in self.__class__._allSlots())

	def __ne__(self, other) -> bool:
		res = self.__eq__(other)
		if res is NotImplemented:
			return res
		return not res

	__hash__ = None


def canonicalJSON(obj) -> str:
	return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def sha256Hex(data: typing.Union[str, bytes]) -> str:
	if isinstance(data, str):
		data = data.encode("utf-8")
	return hashlib.sha256(data).hexdigest()


def fileDigest(path: Path) -> str:
	h = hashlib.sha256()
	with open(path, "rb") as f:
		for chunk in iter(lambda: f.read(1 << 16), b""):
			h.update(chunk)
	return h.hexdigest()


def atomicWriteBytes(path: Path, data: bytes) -> None:
	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	fd, tmpName = tempfile.mkstemp(prefix="." + path.name + ".", suffix=".tmp", dir=str(path.parent))
	try:
		with os.fdopen(fd, "wb") as f:
			f.write(data)
		os.replace(tmpName, str(path))
	except BaseException:
		try:
			os.unlink(tmpName)
		except FileNotFoundError:
			pass
		raise


def writeJSONLines(path: Path, records: typing.Iterable[dict]) -> int:
	lines = [json.dumps(r, ensure_ascii=False, sort_keys=True) for r in records]
	payload = "".join(l + "\n" for l in lines)
	atomicWriteBytes(path, payload.encode("utf-8"))
	return len(lines)


def readJSONLines(path: Path) -> typing.Iterator[dict]:
	with open(path, "rt", encoding="utf-8") as f:
		for l in f:
			l = l.strip()
			if l:
				yield json.loads(l)
