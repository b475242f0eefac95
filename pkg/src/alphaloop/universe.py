"""The IBEX-35 trading universe.

Tickers, display names, and the alias sets the response parser uses to
match firms mentioned by name rather than symbol. The list is operator
overridable via config; this is the default composition.
"""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Firm:
    ticker: str
    name: str
    aliases: tuple[str, ...] = field(default_factory=tuple)

    def all_labels(self) -> tuple[str, ...]:
        return (self.ticker, self.name) + self.aliases


UNIVERSE: tuple[Firm, ...] = (
    Firm("ACS", "ACS", ("Actividades de Construccion y Servicios",)),
    Firm("ACX", "Acerinox"),
    Firm("AENA", "Aena"),
    Firm("AMS", "Amadeus", ("Amadeus IT Group",)),
    Firm("ANA", "Acciona"),
    Firm("ANE", "Acciona Energia", ("Acciona Energía", "Acciona Energias Renovables")),
    Firm("BBVA", "BBVA", ("Banco Bilbao Vizcaya Argentaria",)),
    Firm("BKT", "Bankinter"),
    Firm("CABK", "CaixaBank", ("Caixabank",)),
    Firm("CLNX", "Cellnex", ("Cellnex Telecom",)),
    Firm("COL", "Inmobiliaria Colonial", ("Colonial",)),
    Firm("ELE", "Endesa"),
    Firm("ENG", "Enagas", ("Enagás",)),
    Firm("FER", "Ferrovial"),
    Firm("FDR", "Fluidra"),
    Firm("GRF", "Grifols"),
    Firm("IAG", "IAG", ("International Airlines Group", "International Consolidated Airlines Group")),
    Firm("IBE", "Iberdrola"),
    Firm("IDR", "Indra", ("Indra Sistemas",)),
    Firm("ITX", "Inditex", ("Industria de Diseno Textil",)),
    Firm("LOG", "Logista", ("Compania de Distribucion Integral Logista",)),
    Firm("MAP", "Mapfre"),
    Firm("MEL", "Melia Hotels", ("Meliá Hotels International", "Melia", "Meliá")),
    Firm("MRL", "Merlin Properties", ("Merlin",)),
    Firm("MTS", "ArcelorMittal", ("Arcelor Mittal",)),
    Firm("NTGY", "Naturgy", ("Naturgy Energy Group",)),
    Firm("PUIG", "Puig", ("Puig Brands",)),
    Firm("RED", "Redeia", ("Red Electrica", "Red Eléctrica")),
    Firm("REP", "Repsol"),
    Firm("ROVI", "Rovi", ("Laboratorios Rovi", "Laboratorios Farmaceuticos Rovi")),
    Firm("SAB", "Banco Sabadell", ("Sabadell",)),
    Firm("SAN", "Banco Santander", ("Santander",)),
    Firm("SCYR", "Sacyr"),
    Firm("SLR", "Solaria", ("Solaria Energia",)),
    Firm("TEF", "Telefonica", ("Telefónica",)),
)


def tickers() -> list[str]:
    return [f.ticker for f in UNIVERSE]


def by_ticker() -> dict[str, Firm]:
    return {f.ticker: f for f in UNIVERSE}
